#include "spon/underlay.hpp"

#include <algorithm>
#include <numeric>

namespace spon::netsim {

namespace {

std::pair<AsNumber, AsNumber> ordered(AsNumber a, AsNumber b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

}  // namespace

AsUnderlay::AsUnderlay(std::vector<AsNumber> ases, std::vector<std::pair<AsNumber, AsNumber>> peerings,
                       std::map<NodeIndex, std::vector<AsNumber>> homing)
    : ases_(std::move(ases)), peerings_(std::move(peerings)), homing_(std::move(homing)) {
    std::sort(ases_.begin(), ases_.end());
    ases_.erase(std::unique(ases_.begin(), ases_.end()), ases_.end());
    for (auto& [a, b] : peerings_) {
        if (!has_as(a) || !has_as(b)) throw UnknownAs("peering references unknown AS");
        std::tie(a, b) = ordered(a, b);
    }
    for (const auto& [n, list] : homing_)
        for (auto a : list)
            if (!has_as(a)) throw UnknownAs("node homed in unknown AS " + std::to_string(a));
    recompute();
}

AsUnderlay AsUnderlay::from_topology(const Topology& topo, std::vector<std::pair<AsNumber, AsNumber>> peerings) {
    std::vector<AsNumber> ases;
    std::map<NodeIndex, std::vector<AsNumber>> homing;
    for (NodeIndex n = 0; n < topo.node_count(); ++n) {
        homing[n] = topo.ases_of(n);
        ases.insert(ases.end(), topo.ases_of(n).begin(), topo.ases_of(n).end());
    }
    for (auto [a, b] : peerings) {
        ases.push_back(a);
        ases.push_back(b);
    }
    return AsUnderlay(std::move(ases), std::move(peerings), std::move(homing));
}

bool AsUnderlay::has_as(AsNumber a) const { return std::binary_search(ases_.begin(), ases_.end(), a); }

void AsUnderlay::recompute() {
    std::vector<std::size_t> parent(ases_.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto idx = [&](AsNumber a) {
        return static_cast<std::size_t>(std::lower_bound(ases_.begin(), ases_.end(), a) - ases_.begin());
    };
    for (auto [a, b] : peerings_) {
        bool cut = std::any_of(hijacks_.begin(), hijacks_.end(), [&](const Hijack& h) {
            return h.kind == Hijack::Kind::EdgeCut && ordered(h.a, h.b) == std::pair{a, b};
        });
        if (!cut) parent[find(idx(a))] = find(idx(b));
    }
    component_.clear();
    for (std::size_t i = 0; i < ases_.size(); ++i) component_[ases_[i]] = find(i);
}

bool AsUnderlay::reachable(AsNumber x, AsNumber y) const {
    auto ix = component_.find(x);
    auto iy = component_.find(y);
    if (ix == component_.end() || iy == component_.end()) return false;
    if (x == y) return true;
    for (const auto& h : hijacks_)
        if (h.kind == Hijack::Kind::VictimPair && ordered(h.a, h.b) == ordered(x, y)) return false;
    return ix->second == iy->second;
}

const std::vector<AsNumber>& AsUnderlay::homing(NodeIndex n) const {
    static const std::vector<AsNumber> none;
    auto it = homing_.find(n);
    return it == homing_.end() ? none : it->second;
}

bool AsUnderlay::overlay_link_usable(const Topology& topo, LinkIndex l) const {
    auto [a, b] = topo.endpoints(l);
    const auto& ha = homing(a);
    const auto& hb = homing(b);
    // Nodes without homing are not subject to the underlay.
    if (ha.empty() || hb.empty()) return true;
    for (auto x : ha)
        for (auto y : hb)
            if (reachable(x, y)) return true;
    return false;
}

AsUnderlay apply_hijack(AsUnderlay u, const Hijack& h) {
    if (!u.has_as(h.a)) throw UnknownAs("unknown AS " + std::to_string(h.a));
    if (!u.has_as(h.b)) throw UnknownAs("unknown AS " + std::to_string(h.b));
    if (std::find(u.hijacks_.begin(), u.hijacks_.end(), h) == u.hijacks_.end()) u.hijacks_.push_back(h);
    u.recompute();
    return u;
}

}  // namespace spon::netsim
