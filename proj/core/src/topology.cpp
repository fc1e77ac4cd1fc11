#include "spon/topology.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace spon {

namespace {

bool has_space(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::optional<double> parse_double(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    double v = std::strtod(tmp.c_str(), &end);
    if (end == tmp.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<AsNumber> parse_as(std::string_view s) {
    AsNumber v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::pair<NodeIndex, NodeIndex> ordered(NodeIndex a, NodeIndex b) {
    return a < b ? std::pair{a, b} : std::pair{b, a};
}

}  // namespace

NodeId::NodeId(std::string value) : value_(std::move(value)) {
    if (value_.empty()) throw TopologyError("node id must be non-empty");
    if (has_space(value_)) throw TopologyError("node id contains whitespace: '" + value_ + "'");
}

Topology::Topology(std::vector<NodeDecl> nodes, std::vector<LinkSpec> links,
                   std::map<std::string, NodeId> attachments)
    : nodes_(std::move(nodes)), links_(std::move(links)), attachments_(std::move(attachments)) {
    std::sort(nodes_.begin(), nodes_.end(),
              [](const NodeDecl& x, const NodeDecl& y) { return x.id < y.id; });
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        if (nodes_[i].id == nodes_[i - 1].id)
            throw TopologyError("duplicate node " + nodes_[i].id.str());
    }
    adjacency_.resize(nodes_.size());
    std::set<std::pair<NodeIndex, NodeIndex>> seen;
    for (std::size_t l = 0; l < links_.size(); ++l) {
        const auto& s = links_[l];
        auto a = find(s.a);
        auto b = find(s.b);
        if (!a) throw TopologyError("dangling endpoint " + s.a.str());
        if (!b) throw TopologyError("dangling endpoint " + s.b.str());
        if (*a == *b) throw TopologyError("self link on " + s.a.str());
        if (!(s.latency_ms >= 0.0)) throw TopologyError("negative latency on link " + s.a.str() + "-" + s.b.str());
        if (!(s.loss >= 0.0 && s.loss <= 1.0)) throw TopologyError("loss outside [0,1] on link " + s.a.str() + "-" + s.b.str());
        if (!(s.bw_mbps > 0.0)) throw TopologyError("non-positive bandwidth on link " + s.a.str() + "-" + s.b.str());
        if (!seen.insert(ordered(*a, *b)).second)
            throw TopologyError("duplicate link " + s.a.str() + "-" + s.b.str());
        link_ends_.emplace_back(*a, *b);
        adjacency_[*a].push_back({*b, static_cast<LinkIndex>(l)});
        adjacency_[*b].push_back({*a, static_cast<LinkIndex>(l)});
    }
    for (auto& adj : adjacency_) {
        std::sort(adj.begin(), adj.end(),
                  [](const Adjacency& x, const Adjacency& y) { return x.neighbor < y.neighbor; });
    }
    for (const auto& [client, node] : attachments_) {
        if (!find(node)) throw TopologyError("attachment " + client + " targets unknown node " + node.str());
    }
}

bool Topology::has_as_mapping() const {
    return std::any_of(nodes_.begin(), nodes_.end(), [](const NodeDecl& d) { return !d.ases.empty(); });
}

std::optional<NodeIndex> Topology::find(std::string_view id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id,
                               [](const NodeDecl& d, std::string_view v) { return d.id.str() < v; });
    if (it == nodes_.end() || it->id.str() != id) return std::nullopt;
    return static_cast<NodeIndex>(it - nodes_.begin());
}

std::optional<NodeIndex> Topology::find(const NodeId& id) const { return find(std::string_view(id.str())); }

NodeIndex Topology::index_of(std::string_view id) const {
    auto i = find(id);
    if (!i) throw TopologyError("unknown node " + std::string(id));
    return *i;
}

NodeIndex Topology::index_of(const NodeId& id) const { return index_of(std::string_view(id.str())); }

std::optional<LinkIndex> Topology::link_between(NodeIndex a, NodeIndex b) const {
    if (a >= adjacency_.size()) return std::nullopt;
    const auto& adj = adjacency_[a];
    auto it = std::lower_bound(adj.begin(), adj.end(), b,
                               [](const Adjacency& x, NodeIndex v) { return x.neighbor < v; });
    if (it == adj.end() || it->neighbor != b) return std::nullopt;
    return it->link;
}

std::optional<LinkIndex> Topology::link_between(const NodeId& a, const NodeId& b) const {
    auto ia = find(a);
    auto ib = find(b);
    if (!ia || !ib) return std::nullopt;
    return link_between(*ia, *ib);
}

std::vector<std::vector<NodeIndex>> Topology::components() const {
    std::vector<int> comp(nodes_.size(), -1);
    std::vector<std::vector<NodeIndex>> out;
    for (NodeIndex s = 0; s < nodes_.size(); ++s) {
        if (comp[s] >= 0) continue;
        std::vector<NodeIndex> members{s};
        comp[s] = static_cast<int>(out.size());
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (const auto& adj : adjacency_[members[i]]) {
                if (comp[adj.neighbor] < 0) {
                    comp[adj.neighbor] = comp[s];
                    members.push_back(adj.neighbor);
                }
            }
        }
        std::sort(members.begin(), members.end());
        out.push_back(std::move(members));
    }
    return out;
}

Topology parse_topology(std::string_view text) {
    std::vector<NodeDecl> nodes;
    std::vector<std::pair<std::size_t, LinkSpec>> links;
    std::map<std::string, NodeId> attachments;
    std::map<std::string, std::size_t> node_lines;
    std::set<std::pair<std::string, std::string>> link_keys;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        auto tok = split_ws(line);
        if (tok.empty()) {
            if (nl == text.size()) break;
            continue;
        }
        try {
            if (tok[0] == "node") {
                if (tok.size() < 2 || tok.size() > 3) throw ParseError(line_no, "expected: node <id> [as=<n>,...]");
                std::string id(tok[1]);
                if (node_lines.count(id)) throw ParseError(line_no, "duplicate node " + id);
                NodeDecl decl{NodeId(id), {}};
                if (tok.size() == 3) {
                    if (tok[2].substr(0, 3) != "as=") throw ParseError(line_no, "unknown node attribute '" + std::string(tok[2]) + "'");
                    std::string_view list = tok[2].substr(3);
                    while (!list.empty()) {
                        auto comma = list.find(',');
                        auto item = list.substr(0, comma);
                        auto as = parse_as(item);
                        if (!as) throw ParseError(line_no, "bad AS number '" + std::string(item) + "'");
                        decl.ases.push_back(*as);
                        if (comma == std::string_view::npos) break;
                        list = list.substr(comma + 1);
                    }
                    if (decl.ases.empty()) throw ParseError(line_no, "empty AS list");
                }
                node_lines[id] = line_no;
                nodes.push_back(std::move(decl));
            } else if (tok[0] == "link") {
                if (tok.size() < 3) throw ParseError(line_no, "expected: link <a> <b> latency_ms=<f> [loss=<f>] [bw_mbps=<f>]");
                LinkSpec spec{NodeId(std::string(tok[1])), NodeId(std::string(tok[2])), 0.0, 0.0, 100.0};
                bool have_latency = false;
                for (std::size_t i = 3; i < tok.size(); ++i) {
                    auto eq = tok[i].find('=');
                    if (eq == std::string_view::npos) throw ParseError(line_no, "expected key=value, got '" + std::string(tok[i]) + "'");
                    auto key = tok[i].substr(0, eq);
                    auto val = parse_double(tok[i].substr(eq + 1));
                    if (!val) throw ParseError(line_no, "bad number for " + std::string(key));
                    if (key == "latency_ms") {
                        if (*val < 0) throw ParseError(line_no, "latency_ms must be >= 0");
                        spec.latency_ms = *val;
                        have_latency = true;
                    } else if (key == "loss") {
                        if (*val < 0 || *val > 1) throw ParseError(line_no, "loss must be in [0,1]");
                        spec.loss = *val;
                    } else if (key == "bw_mbps") {
                        if (*val <= 0) throw ParseError(line_no, "bw_mbps must be > 0");
                        spec.bw_mbps = *val;
                    } else {
                        throw ParseError(line_no, "unknown link attribute '" + std::string(key) + "'");
                    }
                }
                if (!have_latency) throw ParseError(line_no, "link missing latency_ms");
                if (spec.a == spec.b) throw ParseError(line_no, "self link on " + spec.a.str());
                auto key = spec.a < spec.b ? std::pair{spec.a.str(), spec.b.str()} : std::pair{spec.b.str(), spec.a.str()};
                if (!link_keys.insert(key).second)
                    throw ParseError(line_no, "duplicate link " + spec.a.str() + " " + spec.b.str());
                links.emplace_back(line_no, std::move(spec));
            } else if (tok[0] == "attach") {
                if (tok.size() != 3) throw ParseError(line_no, "expected: attach <client-id> <node-id>");
                std::string client(tok[1]);
                if (attachments.count(client)) throw ParseError(line_no, "duplicate attachment " + client);
                attachments.emplace(client, NodeId(std::string(tok[2])));
                node_lines.emplace("\x01" + client, line_no);
            } else {
                throw ParseError(line_no, "unknown directive '" + std::string(tok[0]) + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const TopologyError& e) {
            throw ParseError(line_no, e.what());
        }
        if (nl == text.size()) break;
    }

    for (const auto& [line, spec] : links) {
        if (!node_lines.count(spec.a.str())) throw ParseError(line, "dangling endpoint " + spec.a.str());
        if (!node_lines.count(spec.b.str())) throw ParseError(line, "dangling endpoint " + spec.b.str());
    }
    for (const auto& [client, node] : attachments) {
        if (!node_lines.count(node.str()))
            throw ParseError(node_lines["\x01" + client], "attachment target " + node.str() + " is not a node");
    }
    std::vector<LinkSpec> specs;
    specs.reserve(links.size());
    for (auto& [line, spec] : links) specs.push_back(std::move(spec));
    return Topology(std::move(nodes), std::move(specs), std::move(attachments));
}

Topology load_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TopologyError("cannot open topology file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_topology(ss.str());
}

Path to_path(const Topology& topo, const IndexPath& p) {
    Path out;
    out.total_latency_ms = p.latency_ms;
    out.hops.reserve(p.hops.size());
    for (auto h : p.hops) out.hops.push_back(topo.node(h));
    return out;
}

std::string format_path(const Path& p) {
    std::string s;
    for (std::size_t i = 0; i < p.hops.size(); ++i) {
        if (i) s += '-';
        s += p.hops[i].str();
    }
    return s;
}

// ---------------------------------------------------------------------------
// TopologyView

TopologyView::TopologyView(std::shared_ptr<const Topology> base)
    : base_(std::move(base)),
      node_up_(base_->node_count(), true),
      link_up_(base_->link_count(), true),
      loss_override_(base_->link_count()) {}

bool TopologyView::usable(LinkIndex l) const {
    auto [a, b] = base_->endpoints(l);
    return link_up_[l] && node_up_[a] && node_up_[b];
}

double TopologyView::loss(LinkIndex l) const {
    return loss_override_[l] ? *loss_override_[l] : base_->link(l).loss;
}

void TopologyView::set_loss_override(LinkIndex l, std::optional<double> loss) {
    if (loss && !(*loss >= 0.0 && *loss <= 1.0)) throw TopologyError("loss override outside [0,1]");
    loss_override_[l] = loss;
}

bool TopologyView::path_usable(const IndexPath& p) const {
    for (auto h : p.hops)
        if (!node_up_[h]) return false;
    for (std::size_t i = 1; i < p.hops.size(); ++i) {
        auto l = base_->link_between(p.hops[i - 1], p.hops[i]);
        if (!l || !link_up_[*l]) return false;
    }
    return true;
}

bool TopologyView::operator==(const TopologyView& o) const {
    return base_ == o.base_ && node_up_ == o.node_up_ && link_up_ == o.link_up_ &&
           loss_override_ == o.loss_override_;
}

TopologyView apply_fault(TopologyView view, const TopologyChange& change) {
    const Topology& topo = view.base();
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, NodeChange>) {
                auto n = topo.find(c.node);
                if (!n) throw TopologyError("unknown node " + c.node.str());
                view.set_node_up(*n, c.up);
            } else {
                auto l = topo.link_between(c.a, c.b);
                if (!l) throw TopologyError("unknown link " + c.a.str() + "-" + c.b.str());
                if constexpr (std::is_same_v<T, LinkChange>) {
                    view.set_link_up(*l, c.up);
                } else {
                    view.set_loss_override(*l, c.loss);
                }
            }
        },
        change);
    return view;
}

// ---------------------------------------------------------------------------
// Shortest path: Dijkstra over (latency, hop sequence) labels, so equal-latency
// ties resolve to the lexicographically smallest hop sequence.

std::optional<IndexPath> try_shortest_path(const TopologyView& view, NodeIndex src, NodeIndex dst) {
    const Topology& topo = view.base();
    const std::size_t n = topo.node_count();
    if (src >= n || dst >= n) throw TopologyError("node index out of range");
    if (!view.node_up(src) || !view.node_up(dst)) return std::nullopt;
    if (src == dst) return IndexPath{{src}, 0.0};

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf);
    std::vector<std::vector<NodeIndex>> label(n);
    std::vector<bool> done(n, false);
    dist[src] = 0.0;
    label[src] = {src};

    auto better = [&](double d1, const std::vector<NodeIndex>& p1, double d2, const std::vector<NodeIndex>& p2) {
        if (d1 != d2) return d1 < d2;
        return p1 < p2;
    };

    for (;;) {
        std::optional<NodeIndex> u;
        for (NodeIndex v = 0; v < n; ++v) {
            if (done[v] || dist[v] == inf) continue;
            if (!u || better(dist[v], label[v], dist[*u], label[*u])) u = v;
        }
        if (!u) break;
        done[*u] = true;
        if (*u == dst) break;
        for (const auto& adj : topo.neighbors(*u)) {
            if (done[adj.neighbor] || !view.usable(adj.link)) continue;
            double nd = dist[*u] + topo.link(adj.link).latency_ms;
            std::vector<NodeIndex> np = label[*u];
            np.push_back(adj.neighbor);
            if (dist[adj.neighbor] == inf || better(nd, np, dist[adj.neighbor], label[adj.neighbor])) {
                dist[adj.neighbor] = nd;
                label[adj.neighbor] = std::move(np);
            }
        }
    }
    if (!done[dst]) return std::nullopt;
    return IndexPath{label[dst], dist[dst]};
}

IndexPath shortest_path(const TopologyView& view, NodeIndex src, NodeIndex dst) {
    auto p = try_shortest_path(view, src, dst);
    if (!p) throw NoPathError("no path " + view.base().node(src).str() + " -> " + view.base().node(dst).str());
    return *p;
}

Path shortest_path(const TopologyView& view, const NodeId& src, const NodeId& dst) {
    const auto& topo = view.base();
    return to_path(topo, shortest_path(view, topo.index_of(src), topo.index_of(dst)));
}

// ---------------------------------------------------------------------------
// Node-disjoint paths: split every node v into v_in -> v_out (capacity 1),
// then run successive shortest augmenting paths (Bellman-Ford on the residual
// graph, which carries negative reverse costs). Each augmentation yields the
// min-cost flow of the next value, i.e. the min-sum set of that many paths.

namespace {

struct FlowEdge {
    std::uint32_t to;
    int cap;
    double cost;
    std::uint32_t rev;
    bool forward;
};

class FlowGraph {
  public:
    explicit FlowGraph(std::size_t n) : adj_(n) {}

    void add(std::uint32_t u, std::uint32_t v, int cap, double cost) {
        adj_[u].push_back({v, cap, cost, static_cast<std::uint32_t>(adj_[v].size()), true});
        adj_[v].push_back({u, 0, -cost, static_cast<std::uint32_t>(adj_[u].size() - 1), false});
    }

    /// One shortest augmenting path; false if sink unreachable.
    bool augment(std::uint32_t s, std::uint32_t t) {
        constexpr double inf = std::numeric_limits<double>::infinity();
        const std::size_t n = adj_.size();
        std::vector<double> dist(n, inf);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> prev(n, {UINT32_MAX, 0});
        dist[s] = 0.0;
        for (std::size_t round = 0; round < n; ++round) {
            bool changed = false;
            for (std::uint32_t u = 0; u < n; ++u) {
                if (dist[u] == inf) continue;
                for (std::uint32_t e = 0; e < adj_[u].size(); ++e) {
                    const auto& edge = adj_[u][e];
                    if (edge.cap <= 0) continue;
                    double nd = dist[u] + edge.cost;
                    if (nd < dist[edge.to] - 1e-9 * (1.0 + std::abs(nd))) {
                        dist[edge.to] = nd;
                        prev[edge.to] = {u, e};
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (dist[t] == inf) return false;
        for (std::uint32_t v = t; v != s;) {
            auto [u, e] = prev[v];
            auto& edge = adj_[u][e];
            edge.cap -= 1;
            adj_[v][edge.rev].cap += 1;
            v = u;
        }
        return true;
    }

    std::vector<FlowEdge>& out(std::uint32_t u) { return adj_[u]; }

  private:
    std::vector<std::vector<FlowEdge>> adj_;
};

}  // namespace

std::vector<IndexPath> k_disjoint_paths(const TopologyView& view, NodeIndex src, NodeIndex dst, unsigned k) {
    const Topology& topo = view.base();
    const std::size_t n = topo.node_count();
    if (k == 0) throw TopologyError("k must be >= 1");
    if (src >= n || dst >= n) throw TopologyError("node index out of range");
    if (src == dst) throw TopologyError("k_disjoint_paths requires src != dst");
    if (!view.node_up(src) || !view.node_up(dst))
        throw NoPathError("endpoint down: " + topo.node(src).str() + " -> " + topo.node(dst).str());

    auto in = [](NodeIndex v) { return static_cast<std::uint32_t>(2 * v); };
    auto out = [](NodeIndex v) { return static_cast<std::uint32_t>(2 * v + 1); };
    FlowGraph g(2 * n);
    for (NodeIndex v = 0; v < n; ++v) {
        if (!view.node_up(v)) continue;
        int cap = (v == src || v == dst) ? static_cast<int>(k) : 1;
        g.add(in(v), out(v), cap, 0.0);
    }
    for (LinkIndex l = 0; l < topo.link_count(); ++l) {
        if (!view.usable(l)) continue;
        auto [a, b] = topo.endpoints(l);
        double c = topo.link(l).latency_ms;
        g.add(out(a), in(b), 1, c);
        g.add(out(b), in(a), 1, c);
    }

    unsigned found = 0;
    while (found < k && g.augment(out(src), in(dst))) ++found;
    if (found == 0)
        throw NoPathError("no path " + topo.node(src).str() + " -> " + topo.node(dst).str());

    std::vector<IndexPath> paths;
    for (unsigned p = 0; p < found; ++p) {
        IndexPath path{{src}, 0.0};
        NodeIndex cur = src;
        while (cur != dst) {
            bool advanced = false;
            for (auto& e : g.out(out(cur))) {
                // Forward link edges carrying flow have their capacity exhausted.
                if (!e.forward || e.cap != 0 || e.to % 2 != 0) continue;
                NodeIndex next = e.to / 2;
                auto link = topo.link_between(cur, next);
                if (!link) continue;
                e.cap = -1;  // consumed by this decomposition
                path.hops.push_back(next);
                path.latency_ms += topo.link(*link).latency_ms;
                cur = next;
                advanced = true;
                break;
            }
            if (!advanced) throw std::logic_error("disjoint path decomposition failed");
        }
        paths.push_back(std::move(path));
    }
    std::sort(paths.begin(), paths.end(), [](const IndexPath& x, const IndexPath& y) {
        if (x.latency_ms != y.latency_ms) return x.latency_ms < y.latency_ms;
        return x.hops < y.hops;
    });
    return paths;
}

std::vector<Path> k_disjoint_paths(const TopologyView& view, const NodeId& src, const NodeId& dst, unsigned k) {
    const auto& topo = view.base();
    auto ip = k_disjoint_paths(view, topo.index_of(src), topo.index_of(dst), k);
    std::vector<Path> out;
    out.reserve(ip.size());
    for (const auto& p : ip) out.push_back(to_path(topo, p));
    return out;
}

}  // namespace spon
