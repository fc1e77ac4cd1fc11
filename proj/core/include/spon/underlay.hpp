#pragma once

#include <map>
#include <utility>
#include <vector>

#include "spon/topology.hpp"

namespace spon::netsim {

/// Reachability removal between two ASes.
///   VictimPair: a and b can no longer reach each other, whatever the path.
///   EdgeCut:    the peering edge a-b disappears from the AS graph.
struct Hijack {
    enum class Kind { VictimPair, EdgeCut };
    Kind kind = Kind::VictimPair;
    AsNumber a = 0;
    AsNumber b = 0;

    static Hijack victim_pair(AsNumber a, AsNumber b) { return {Kind::VictimPair, a, b}; }
    static Hijack edge_cut(AsNumber a, AsNumber b) { return {Kind::EdgeCut, a, b}; }
    bool operator==(const Hijack&) const = default;
};

class UnknownAs : public TopologyError {
  public:
    using TopologyError::TopologyError;
};

/// AS-level peering graph plus overlay-node homing. An overlay link a-b is
/// usable iff some x in homing(a), y in homing(b) are mutually reachable.
class AsUnderlay {
  public:
    AsUnderlay() = default;
    AsUnderlay(std::vector<AsNumber> ases, std::vector<std::pair<AsNumber, AsNumber>> peerings,
               std::map<NodeIndex, std::vector<AsNumber>> homing);
    /// Homing taken from the `as=` annotations of the topology.
    static AsUnderlay from_topology(const Topology& topo, std::vector<std::pair<AsNumber, AsNumber>> peerings);

    bool has_as(AsNumber a) const;
    bool reachable(AsNumber x, AsNumber y) const;
    bool overlay_link_usable(const Topology& topo, LinkIndex l) const;
    const std::vector<AsNumber>& homing(NodeIndex n) const;
    const std::vector<Hijack>& hijacks() const { return hijacks_; }
    const std::vector<AsNumber>& ases() const { return ases_; }

    friend AsUnderlay apply_hijack(AsUnderlay u, const Hijack& h);

  private:
    void recompute();

    std::vector<AsNumber> ases_;
    std::vector<std::pair<AsNumber, AsNumber>> peerings_;
    std::map<NodeIndex, std::vector<AsNumber>> homing_;
    std::vector<Hijack> hijacks_;
    std::map<AsNumber, std::size_t> component_;
};

/// Throws UnknownAs when the hijack names an AS outside the underlay.
AsUnderlay apply_hijack(AsUnderlay u, const Hijack& h);

}  // namespace spon::netsim
