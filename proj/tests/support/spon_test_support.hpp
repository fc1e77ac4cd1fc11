#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "spon/assets.hpp"
#include "spon/payment.hpp"
#include "spon/topology.hpp"

namespace spon::testing {

inline std::shared_ptr<const Topology> builtin(const char* name) {
    return std::make_shared<const Topology>(parse_topology(*canonical_topology(name)));
}

inline std::shared_ptr<const Topology> chain() { return builtin("chain"); }

// ---------------------------------------------------------------------------
// Exhaustive node-disjoint path oracle

struct SimplePath {
    std::vector<NodeIndex> hops;
    double latency = 0.0;
    std::uint64_t interior = 0;
};

inline std::vector<SimplePath> all_simple_paths(const TopologyView& view, NodeIndex src, NodeIndex dst) {
    std::vector<SimplePath> out;
    std::vector<NodeIndex> stack{src};
    std::vector<bool> on(view.base().node_count(), false);
    on[src] = true;
    auto dfs = [&](auto&& self, NodeIndex at, double lat) -> void {
        if (at == dst) {
            SimplePath p{stack, lat, 0};
            for (std::size_t i = 1; i + 1 < stack.size(); ++i) p.interior |= 1ULL << stack[i];
            out.push_back(std::move(p));
            return;
        }
        for (const auto& adj : view.base().neighbors(at)) {
            if (on[adj.neighbor] || !view.usable(adj.link)) continue;
            on[adj.neighbor] = true;
            stack.push_back(adj.neighbor);
            self(self, adj.neighbor, lat + view.base().link(adj.link).latency_ms);
            stack.pop_back();
            on[adj.neighbor] = false;
        }
    };
    if (view.node_up(src) && view.node_up(dst)) dfs(dfs, src, 0.0);
    std::sort(out.begin(), out.end(), [](const SimplePath& a, const SimplePath& b) { return a.latency < b.latency; });
    return out;
}

struct DisjointOptimum {
    std::size_t count = 0;
    double total_latency = 0.0;
};

/// Largest node-disjoint set of at most k paths, minimal summed latency.
inline DisjointOptimum brute_force_disjoint(const TopologyView& view, NodeIndex src, NodeIndex dst, unsigned k) {
    auto paths = all_simple_paths(view, src, dst);
    const std::size_t cap = std::min<std::size_t>(k, paths.size());
    for (std::size_t want = cap; want > 0; --want) {
        double best = std::numeric_limits<double>::infinity();
        auto search = [&](auto&& self, std::size_t from, std::uint64_t used, std::size_t have, double sum) -> void {
            if (have == want) {
                best = std::min(best, sum);
                return;
            }
            for (std::size_t j = from; j < paths.size(); ++j) {
                if (sum + static_cast<double>(want - have) * paths[j].latency >= best) return;
                if (paths[j].interior & used) continue;
                // The direct edge has no interior; it may appear once.
                if (paths[j].hops.size() == 2 && (used & (1ULL << 63))) continue;
                std::uint64_t mark = paths[j].hops.size() == 2 ? (1ULL << 63) : 0;
                self(self, j + 1, used | paths[j].interior | mark, have + 1, sum + paths[j].latency);
            }
        };
        search(search, 0, 0, 0, 0.0);
        if (best < std::numeric_limits<double>::infinity()) return {want, best};
    }
    return {};
}

/// Random graph on nodes n0..n{count-1} with integer latencies in [1, 20].
inline Topology random_topology(std::mt19937_64& rng, unsigned count, double edge_prob, double max_loss = 0.0) {
    std::vector<NodeDecl> nodes;
    for (unsigned i = 0; i < count; ++i) nodes.push_back({NodeId("n" + std::to_string(i)), {}});
    std::vector<LinkSpec> links;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> lat(1, 20);
    for (unsigned a = 0; a < count; ++a)
        for (unsigned b = a + 1; b < count; ++b)
            if (coin(rng) < edge_prob) {
                LinkSpec l;
                l.a = nodes[a].id;
                l.b = nodes[b].id;
                l.latency_ms = lat(rng);
                l.loss = max_loss > 0.0 ? coin(rng) * max_loss : 0.0;
                links.push_back(l);
            }
    return Topology(std::move(nodes), std::move(links));
}

/// Connected random graph: a random spanning tree plus extra edges.
inline Topology random_connected_topology(std::mt19937_64& rng, unsigned count, double extra_prob,
                                          double max_loss = 0.0) {
    std::vector<NodeDecl> nodes;
    for (unsigned i = 0; i < count; ++i) nodes.push_back({NodeId("n" + std::to_string(10 + i)), {}});
    std::vector<LinkSpec> links;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> lat(1, 20);
    std::vector<std::vector<bool>> has(count, std::vector<bool>(count, false));
    auto add = [&](unsigned a, unsigned b) {
        if (a == b || has[a][b]) return;
        has[a][b] = has[b][a] = true;
        LinkSpec l;
        l.a = nodes[a].id;
        l.b = nodes[b].id;
        l.latency_ms = lat(rng);
        l.loss = max_loss > 0.0 ? coin(rng) * max_loss : 0.0;
        links.push_back(l);
    };
    for (unsigned i = 1; i < count; ++i) add(i, std::uniform_int_distribution<unsigned>(0, i - 1)(rng));
    for (unsigned a = 0; a < count; ++a)
        for (unsigned b = a + 1; b < count; ++b)
            if (coin(rng) < extra_prob) add(a, b);
    return Topology(std::move(nodes), std::move(links));
}

/// True when removing `removed` leaves the remaining nodes connected.
inline bool connected_without(const Topology& topo, const std::vector<bool>& removed) {
    const auto n = topo.node_count();
    NodeIndex start = 0;
    while (start < n && removed[start]) ++start;
    if (start == n) return true;
    std::vector<bool> seen(n, false);
    std::vector<NodeIndex> stack{start};
    seen[start] = true;
    while (!stack.empty()) {
        auto at = stack.back();
        stack.pop_back();
        for (const auto& adj : topo.neighbors(at))
            if (!removed[adj.neighbor] && !seen[adj.neighbor]) {
                seen[adj.neighbor] = true;
                stack.push_back(adj.neighbor);
            }
    }
    for (NodeIndex i = 0; i < n; ++i)
        if (!removed[i] && !seen[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Payment harness

struct Sent {
    std::string to;
    payment::IlpPacket packet;
};

class FakePaymentContext : public payment::PaymentContext {
  public:
    double now() const override { return now_ms; }
    const std::string& self() const override { return name; }
    void send(const std::string& peer, const payment::IlpPacket& p) override { sent.push_back({peer, p}); }
    std::uint64_t set_timer(double delay_ms, std::uint64_t token) override {
        timers[++next_timer] = {now_ms + delay_ms, token};
        return next_timer;
    }
    void cancel_timer(std::uint64_t id) override { timers.erase(id); }
    void log(const std::string& kind, const payment::IlpPacket&, const std::string& result) override {
        logs.push_back(kind + ":" + result);
    }

    double now_ms = 0.0;
    std::string name = "self";
    std::vector<Sent> sent;
    std::map<std::uint64_t, std::pair<double, std::uint64_t>> timers;
    std::vector<std::string> logs;
    std::uint64_t next_timer = 0;
};

}  // namespace spon::testing
