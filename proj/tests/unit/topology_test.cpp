#include <doctest.h>

#include "spon_test_support.hpp"

using namespace spon;
using spon::testing::chain;

namespace {

std::vector<std::string> hops(const Path& p) {
    std::vector<std::string> out;
    for (const auto& h : p.hops) out.push_back(h.str());
    return out;
}

TopologyView chain_view() { return TopologyView(chain()); }

TopologyView down(TopologyView v, std::initializer_list<const char*> nodes) {
    for (auto n : nodes) v = apply_fault(std::move(v), NodeChange{NodeId(n), false});
    return v;
}

}  // namespace

TEST_SUITE("topology") {
    TEST_CASE("minimal file parses") {
        auto t = parse_topology("node A\nnode B\nlink A B latency_ms=5 loss=0 bw_mbps=15");
        CHECK(t.node_count() == 2);
        CHECK(t.link_count() == 1);
        CHECK(t.link(0).latency_ms == 5.0);
        CHECK(t.link(0).bw_mbps == 15.0);
    }

    TEST_CASE("dangling endpoint is reported") {
        try {
            parse_topology("node A\nlink A B latency_ms=5");
            FAIL("expected a parse error");
        } catch (const TopologyError& e) {
            CHECK(std::string(e.what()).find("dangling endpoint B") != std::string::npos);
        }
    }

    TEST_CASE("malformed input") {
        CHECK_THROWS_AS(parse_topology("node A\nnode A"), TopologyError);
        CHECK_THROWS_AS(parse_topology("node A\nnode B\nlink A B latency_ms=x"), TopologyError);
        CHECK_THROWS_AS(parse_topology("node A\nnode B\nlink A B latency_ms=1 loss=2"), TopologyError);
        CHECK_THROWS_AS(parse_topology("frobnicate A"), TopologyError);
        CHECK_THROWS_AS(parse_topology("node A\nattach c B"), TopologyError);
    }

    TEST_CASE("comments, AS annotations and attachments") {
        auto t = parse_topology("# c\nnode A as=1,2 # trailing\nnode B as=3\nlink A B latency_ms=1\nattach c1 A\n");
        CHECK(t.ases_of(t.index_of("A")) == std::vector<AsNumber>{1, 2});
        CHECK(t.has_as_mapping());
        CHECK(t.attachments().at("c1") == NodeId("A"));
        CHECK(t.link(0).loss == 0.0);
        CHECK(t.link(0).bw_mbps == 100.0);
    }

    TEST_CASE("node index order follows id order") {
        auto t = parse_topology("node b\nnode a\nnode c\nlink c a latency_ms=1");
        CHECK(t.node(0).str() == "a");
        CHECK(t.node(1).str() == "b");
        CHECK(t.node(2).str() == "c");
    }

    TEST_CASE("canonical chain has 12 nodes and 4 disjoint 1-5 paths") {
        auto t = chain();
        CHECK(t->node_count() == 12);
        auto paths = k_disjoint_paths(TopologyView(t), NodeId("1"), NodeId("5"), 10);
        CHECK(paths.size() == 4);
        auto oracle = spon::testing::brute_force_disjoint(TopologyView(t), t->index_of("1"), t->index_of("5"), 10);
        CHECK(oracle.count == 4);
    }

    TEST_CASE("shortest path on the chain") {
        auto p = shortest_path(chain_view(), NodeId("1"), NodeId("5"));
        CHECK(hops(p) == std::vector<std::string>{"1", "12", "13", "14", "5"});
        CHECK(p.total_latency_ms == 16.0);
    }

    TEST_CASE("meltdown leaves the 20 ms path") {
        auto p = shortest_path(down(chain_view(), {"2", "7", "14"}), NodeId("1"), NodeId("5"));
        CHECK(hops(p) == std::vector<std::string>{"1", "9", "10", "11", "5"});
        CHECK(p.total_latency_ms == 20.0);
    }

    TEST_CASE("src equals dst") {
        auto p = shortest_path(chain_view(), NodeId("13"), NodeId("13"));
        CHECK(hops(p) == std::vector<std::string>{"13"});
        CHECK(p.total_latency_ms == 0.0);
    }

    TEST_CASE("two disjoint paths on the chain") {
        auto ps = k_disjoint_paths(chain_view(), NodeId("1"), NodeId("5"), 2);
        REQUIRE(ps.size() == 2);
        CHECK(hops(ps[0]) == std::vector<std::string>{"1", "12", "13", "14", "5"});
        CHECK(ps[0].total_latency_ms == 16.0);
        CHECK(hops(ps[1]) == std::vector<std::string>{"1", "9", "10", "11", "5"});
        CHECK(ps[1].total_latency_ms == 20.0);
        auto oracle = spon::testing::brute_force_disjoint(chain_view(), chain()->index_of("1"), chain()->index_of("5"), 2);
        CHECK(oracle.count == 2);
        CHECK(oracle.total_latency == 36.0);
    }

    TEST_CASE("single edge graph yields one path for any k") {
        auto t = std::make_shared<const Topology>(parse_topology("node A\nnode B\nlink A B latency_ms=3"));
        auto ps = k_disjoint_paths(TopologyView(t), NodeId("A"), NodeId("B"), 3);
        REQUIRE(ps.size() == 1);
        CHECK(hops(ps[0]) == std::vector<std::string>{"A", "B"});
    }

    TEST_CASE("no path errors") {
        auto t = std::make_shared<const Topology>(parse_topology("node A\nnode B\nnode C\nlink A B latency_ms=3"));
        CHECK_THROWS_AS(shortest_path(TopologyView(t), NodeId("A"), NodeId("C")), NoPathError);
        CHECK_THROWS_AS(k_disjoint_paths(TopologyView(t), NodeId("A"), NodeId("C"), 2), NoPathError);
        auto v = apply_fault(TopologyView(t), LinkChange{NodeId("A"), NodeId("B"), false});
        CHECK_THROWS_AS(shortest_path(v, NodeId("A"), NodeId("B")), NoPathError);
    }

    TEST_CASE("node down then up restores the view") {
        auto v0 = chain_view();
        auto v1 = apply_fault(v0, NodeChange{NodeId("14"), false});
        CHECK_FALSE(v1 == v0);
        auto v2 = apply_fault(v1, NodeChange{NodeId("14"), true});
        CHECK(v2 == v0);
        CHECK(apply_fault(v1, NodeChange{NodeId("14"), false}) == v1);
    }

    TEST_CASE("loss override changes loss, not paths") {
        auto v0 = chain_view();
        auto v1 = apply_fault(v0, LossChange{NodeId("12"), NodeId("13"), 0.05});
        auto l = *chain()->link_between(NodeId("12"), NodeId("13"));
        CHECK(v1.loss(l) == 0.05);
        CHECK(v0.loss(l) == 0.0);
        CHECK(k_disjoint_paths(v1, NodeId("1"), NodeId("5"), 4) == k_disjoint_paths(v0, NodeId("1"), NodeId("5"), 4));
    }

    TEST_CASE("unknown fault targets") {
        CHECK_THROWS_AS(apply_fault(chain_view(), NodeChange{NodeId("99"), false}), TopologyError);
        CHECK_THROWS_AS(apply_fault(chain_view(), LinkChange{NodeId("1"), NodeId("5"), false}), TopologyError);
    }

    TEST_CASE("disjoint paths match the exhaustive oracle on random graphs") {
        std::mt19937_64 rng(7);
        for (int g = 0; g < 60; ++g) {
            unsigned n = 2 + static_cast<unsigned>(rng() % 8);
            auto t = std::make_shared<const Topology>(spon::testing::random_topology(rng, n, 0.45));
            TopologyView v(t);
            NodeIndex s = rng() % n;
            NodeIndex d = rng() % n;
            if (s == d) continue;
            unsigned k = 1 + static_cast<unsigned>(rng() % 4);
            auto oracle = spon::testing::brute_force_disjoint(v, s, d, k);
            if (oracle.count == 0) {
                CHECK_THROWS_AS(k_disjoint_paths(v, s, d, k), NoPathError);
                continue;
            }
            auto ps = k_disjoint_paths(v, s, d, k);
            CHECK(ps.size() == oracle.count);
            double sum = 0.0;
            std::vector<int> seen(n, 0);
            for (std::size_t i = 0; i < ps.size(); ++i) {
                sum += ps[i].latency_ms;
                CHECK(ps[i].hops.front() == s);
                CHECK(ps[i].hops.back() == d);
                for (std::size_t h = 1; h + 1 < ps[i].hops.size(); ++h) ++seen[ps[i].hops[h]];
                if (i > 0) CHECK(ps[i - 1].latency_ms <= ps[i].latency_ms);
            }
            CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c <= 1; }));
            CHECK(sum == oracle.total_latency);
        }
    }

    TEST_CASE("removing a node never shortens a path") {
        std::mt19937_64 rng(11);
        for (int g = 0; g < 30; ++g) {
            unsigned n = 4 + static_cast<unsigned>(rng() % 7);
            auto t = std::make_shared<const Topology>(spon::testing::random_topology(rng, n, 0.5));
            TopologyView v(t);
            NodeIndex cut = rng() % n;
            TopologyView w = v;
            w.set_node_up(cut, false);
            for (NodeIndex a = 0; a < n; ++a)
                for (NodeIndex b = 0; b < n; ++b) {
                    if (a == cut || b == cut) continue;
                    auto before = try_shortest_path(v, a, b);
                    auto after = try_shortest_path(w, a, b);
                    if (after) {
                        REQUIRE(before);
                        CHECK(after->latency_ms >= before->latency_ms);
                    }
                }
        }
    }

    TEST_CASE("path computation is deterministic") {
        std::mt19937_64 rng(3);
        auto t = std::make_shared<const Topology>(spon::testing::random_topology(rng, 10, 0.5));
        TopologyView v(t);
        for (unsigned k = 1; k <= 3; ++k) {
            std::vector<IndexPath> first;
            try {
                first = k_disjoint_paths(v, 0, 9, k);
            } catch (const NoPathError&) {
                continue;
            }
            for (int r = 0; r < 5; ++r) CHECK(k_disjoint_paths(v, 0, 9, k) == first);
        }
    }

    TEST_CASE("global topology anchors") {
        auto t = spon::testing::builtin("global");
        TopologyView v(t);
        CHECK(shortest_path(v, NodeId("FRA"), NodeId("HKG")).total_latency_ms == 148.0);
        for (auto n : {"SJC", "NYC", "LON", "WAS", "JHU", "DFW", "ATL"}) v = apply_fault(v, NodeChange{NodeId(n), false});
        auto p = shortest_path(v, NodeId("FRA"), NodeId("HKG"));
        CHECK(hops(p) == std::vector<std::string>{"FRA", "CHI", "DEN", "LAX", "HKG"});
        CHECK(p.total_latency_ms == 151.0);
        CHECK(k_disjoint_paths(v, NodeId("FRA"), NodeId("HKG"), 4).size() == 1);
    }
}
