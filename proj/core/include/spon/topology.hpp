#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace spon {

using NodeIndex = std::uint32_t;
using LinkIndex = std::uint32_t;
using AsNumber = std::uint32_t;
using TimeMs = double;

class TopologyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ParseError : public TopologyError {
  public:
    ParseError(std::size_t line, const std::string& what)
        : TopologyError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

class NoPathError : public TopologyError {
  public:
    using TopologyError::TopologyError;
};

/// Overlay node label. Non-empty, no whitespace.
class NodeId {
  public:
    NodeId() = default;
    explicit NodeId(std::string value);

    const std::string& str() const { return value_; }
    auto operator<=>(const NodeId&) const = default;

  private:
    std::string value_;
};

struct LinkSpec {
    NodeId a;
    NodeId b;
    double latency_ms = 0.0;
    double loss = 0.0;
    double bw_mbps = 100.0;
};

struct NodeDecl {
    NodeId id;
    std::vector<AsNumber> ases;
};

struct Adjacency {
    NodeIndex neighbor;
    LinkIndex link;
};

/// Immutable overlay graph. Nodes are indexed in ascending id order.
class Topology {
  public:
    Topology(std::vector<NodeDecl> nodes, std::vector<LinkSpec> links,
             std::map<std::string, NodeId> attachments = {});

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t link_count() const { return links_.size(); }

    const NodeId& node(NodeIndex i) const { return nodes_[i].id; }
    const std::vector<AsNumber>& ases_of(NodeIndex i) const { return nodes_[i].ases; }
    bool has_as_mapping() const;

    std::optional<NodeIndex> find(const NodeId& id) const;
    std::optional<NodeIndex> find(std::string_view id) const;
    /// Throws TopologyError for unknown ids.
    NodeIndex index_of(const NodeId& id) const;
    NodeIndex index_of(std::string_view id) const;

    const LinkSpec& link(LinkIndex l) const { return links_[l]; }
    const std::vector<LinkSpec>& links() const { return links_; }
    std::pair<NodeIndex, NodeIndex> endpoints(LinkIndex l) const { return link_ends_[l]; }
    std::optional<LinkIndex> link_between(NodeIndex a, NodeIndex b) const;
    std::optional<LinkIndex> link_between(const NodeId& a, const NodeId& b) const;

    /// Sorted by neighbor index.
    const std::vector<Adjacency>& neighbors(NodeIndex i) const { return adjacency_[i]; }

    const std::map<std::string, NodeId>& attachments() const { return attachments_; }

    /// Connected components, each sorted, ordered by smallest member.
    std::vector<std::vector<NodeIndex>> components() const;

  private:
    std::vector<NodeDecl> nodes_;
    std::vector<LinkSpec> links_;
    std::vector<std::pair<NodeIndex, NodeIndex>> link_ends_;
    std::vector<std::vector<Adjacency>> adjacency_;
    std::map<std::string, NodeId> attachments_;
};

/// Parses the line-based topology format:
///   node <id> [as=<n>[,<n>...]]
///   link <a> <b> latency_ms=<f> loss=<f> bw_mbps=<f>
///   attach <client-id> <node-id>
/// '#' starts a comment. Missing link attributes default to loss=0, bw_mbps=100.
Topology parse_topology(std::string_view text);
Topology load_topology_file(const std::string& path);

struct Path {
    std::vector<NodeId> hops;
    double total_latency_ms = 0.0;

    bool operator==(const Path&) const = default;
};

/// Same as Path, on node indices. Used on hot paths inside the overlay.
struct IndexPath {
    std::vector<NodeIndex> hops;
    double latency_ms = 0.0;

    bool operator==(const IndexPath&) const = default;
};

Path to_path(const Topology& topo, const IndexPath& p);
std::string format_path(const Path& p);

/// Up/down state and loss overrides layered over an immutable Topology.
class TopologyView {
  public:
    explicit TopologyView(std::shared_ptr<const Topology> base);

    const Topology& base() const { return *base_; }
    const std::shared_ptr<const Topology>& base_ptr() const { return base_; }

    bool node_up(NodeIndex n) const { return node_up_[n]; }
    bool link_up(LinkIndex l) const { return link_up_[l]; }
    /// Link usable: link and both endpoints up.
    bool usable(LinkIndex l) const;
    double loss(LinkIndex l) const;
    std::optional<double> loss_override(LinkIndex l) const { return loss_override_[l]; }

    void set_node_up(NodeIndex n, bool up) { node_up_[n] = up; }
    void set_link_up(LinkIndex l, bool up) { link_up_[l] = up; }
    void set_loss_override(LinkIndex l, std::optional<double> loss);

    bool path_usable(const IndexPath& p) const;

    bool operator==(const TopologyView& o) const;

  private:
    std::shared_ptr<const Topology> base_;
    std::vector<bool> node_up_;
    std::vector<bool> link_up_;
    std::vector<std::optional<double>> loss_override_;
};

struct NodeChange {
    NodeId node;
    bool up = true;
    bool operator==(const NodeChange&) const = default;
};
struct LinkChange {
    NodeId a;
    NodeId b;
    bool up = true;
    bool operator==(const LinkChange&) const = default;
};
struct LossChange {
    NodeId a;
    NodeId b;
    double loss = 0.0;
    bool operator==(const LossChange&) const = default;
};
using TopologyChange = std::variant<NodeChange, LinkChange, LossChange>;

/// Throws TopologyError when the target does not exist in the base topology.
TopologyView apply_fault(TopologyView view, const TopologyChange& change);

// Path computation. All three throw NoPathError when nothing is usable.
Path shortest_path(const TopologyView& view, const NodeId& src, const NodeId& dst);
std::vector<Path> k_disjoint_paths(const TopologyView& view, const NodeId& src, const NodeId& dst,
                                   unsigned k);

IndexPath shortest_path(const TopologyView& view, NodeIndex src, NodeIndex dst);
std::vector<IndexPath> k_disjoint_paths(const TopologyView& view, NodeIndex src, NodeIndex dst,
                                        unsigned k);

/// Non-throwing variant; nullopt when no path.
std::optional<IndexPath> try_shortest_path(const TopologyView& view, NodeIndex src, NodeIndex dst);

}  // namespace spon
