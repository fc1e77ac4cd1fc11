#include <doctest.h>

#include <algorithm>

#include "spon/netsim.hpp"
#include "spon/overlay.hpp"
#include "spon_test_support.hpp"

using namespace spon;
using namespace spon::overlay;

namespace {

NodeIndex ix(const char* id) { return spon::testing::chain()->index_of(id); }

NodeState chain_node(const char* id, NodeConfig cfg = {}) { return NodeState(ix(id), TopologyView(spon::testing::chain()), cfg); }

template <class T>
std::vector<T> only(const Effects& fx) {
    std::vector<T> out;
    for (const auto& e : fx)
        if (auto* p = std::get_if<T>(&e)) out.push_back(*p);
    return out;
}

std::vector<NodeIndex> targets(const Effects& fx) {
    std::vector<NodeIndex> out;
    for (const auto& t : only<LinkTransmit>(fx)) out.push_back(t.neighbor);
    return out;
}

Payload bytes(std::size_t n = 4) { return std::make_shared<const Bytes>(n, 0x5A); }

FramePtr flooded(NodeIndex src, NodeIndex dst, std::uint64_t seq) {
    auto f = std::make_shared<Frame>();
    f->service = {ServiceKind::Priority, 0};
    f->src = src;
    f->dst = dst;
    f->seq = seq;
    f->payload = bytes();
    return f;
}

NodeConfig plain() {
    NodeConfig c;
    c.hop_recovery = false;
    return c;
}

}  // namespace

TEST_SUITE("overlay") {
    TEST_CASE("k=2 sends one copy down each disjoint path") {
        auto n = chain_node("1");
        auto fx = n.client_send(0.0, ix("5"), bytes(), {ServiceKind::Priority, 2});
        auto t = targets(fx);
        REQUIRE(t.size() == 2);
        CHECK(std::count(t.begin(), t.end(), ix("12")) == 1);
        CHECK(std::count(t.begin(), t.end(), ix("9")) == 1);
    }

    TEST_CASE("flooding transmits to every up neighbor") {
        auto n = chain_node("1");
        auto t = targets(n.client_send(0.0, ix("5"), bytes(), {ServiceKind::Priority, 0}));
        std::sort(t.begin(), t.end());
        std::vector<NodeIndex> expect{ix("12"), ix("9"), ix("6"), ix("2")};
        std::sort(expect.begin(), expect.end());
        CHECK(t == expect);
    }

    TEST_CASE("send to self delivers locally") {
        auto n = chain_node("1");
        auto fx = n.client_send(0.0, ix("1"), bytes(), {ServiceKind::Priority, 1});
        CHECK(fx.size() == 1);
        CHECK(only<Deliver>(fx).size() == 1);
    }

    TEST_CASE("flooded duplicate is dropped") {
        auto n = chain_node("10", plain());
        auto first = n.handle_frame(0.0, ix("9"), flooded(ix("1"), ix("10"), 1));
        CHECK(only<Deliver>(first).size() == 1);
        auto second = n.handle_frame(1.0, ix("11"), flooded(ix("1"), ix("10"), 1));
        CHECK(only<Deliver>(second).empty());
        auto drops = only<Drop>(second);
        REQUIRE(drops.size() == 1);
        CHECK(drops[0].reason == DropReason::Duplicate);

        auto relay = n.handle_frame(2.0, ix("9"), flooded(ix("1"), ix("5"), 1));
        CHECK(targets(relay) == std::vector<NodeIndex>{ix("11")});
        auto again = n.handle_frame(3.0, ix("11"), flooded(ix("1"), ix("5"), 1));
        CHECK(targets(again).empty());
        CHECK(only<Drop>(again).at(0).reason == DropReason::Duplicate);
    }

    TEST_CASE("source-routed frame follows its route") {
        auto n = chain_node("13", plain());
        auto f = std::make_shared<Frame>();
        f->service = {ServiceKind::Priority, 1};
        f->src = ix("1");
        f->dst = ix("5");
        f->seq = 1;
        f->deadline_ms = 1e9;
        f->routes = {{ix("1"), ix("12"), ix("13"), ix("14"), ix("5")}};
        CHECK(targets(n.handle_frame(0.0, ix("12"), f)) == std::vector<NodeIndex>{ix("14")});
    }

    TEST_CASE("adversary on the only path versus flooding") {
        auto run = [](ServiceClass svc) {
            netsim::Simulator sim(spon::testing::chain(), {}, 5);
            sim.set_behavior(NodeId("13"), Behavior::drop_all());
            int got = 0;
            sim.on_deliver([&](TimeMs, NodeIndex node, const Deliver&) { got += node == ix("5"); });
            sim.schedule_send(0.0, ix("1"), ix("5"), bytes(), svc);
            sim.run(10000.0);
            return got;
        };
        CHECK(run({ServiceKind::Priority, 1}) == 0);
        CHECK(run({ServiceKind::Priority, 0}) == 1);
    }

    TEST_CASE("expired message at the head is dropped") {
        auto n = chain_node("1", plain());
        ServiceClass k1{ServiceKind::Priority, 1};
        CHECK(targets(n.client_send(0.0, ix("5"), bytes(), k1)).size() == 1);
        SendOptions early;
        early.deadline_ms = 1.0;
        CHECK(targets(n.client_send(0.0, ix("5"), bytes(), k1, early)).empty());
        CHECK(targets(n.client_send(0.0, ix("5"), bytes(), k1)).empty());
        auto fx = n.on_link_idle(5.0, ix("12"));
        auto drops = only<Drop>(fx);
        REQUIRE(drops.size() == 1);
        CHECK(drops[0].reason == DropReason::Expired);
        CHECK(drops[0].seq == 2);
        auto sent = only<LinkTransmit>(fx);
        REQUIRE(sent.size() == 1);
        CHECK(sent[0].frame->seq == 3);
    }

    TEST_CASE("reliable retransmission doubles the timeout") {
        auto n = chain_node("1", plain());
        auto fx = n.client_send(0.0, ix("5"), bytes(), {ServiceKind::Reliable, 1});
        auto timers = only<SetTimer>(fx);
        REQUIRE(timers.size() == 1);
        CHECK(timers[0].delay_ms == doctest::Approx(64.0));
        n.on_link_idle(1.0, ix("12"));
        auto re = n.handle_timer(64.0, timers[0].id);
        auto sent = only<LinkTransmit>(re);
        REQUIRE(sent.size() == 1);
        CHECK(sent[0].frame->attempt == 1);
        auto next = only<SetTimer>(re);
        REQUIRE(next.size() == 1);
        CHECK(next[0].delay_ms == doctest::Approx(128.0));
        CHECK(n.stats().rel_retransmits == 1);
    }

    TEST_CASE("reliable gives up after the retry limit") {
        NodeConfig cfg = plain();
        cfg.rel_max_retries = 2;
        auto n = chain_node("1", cfg);
        auto timer = only<SetTimer>(n.client_send(0.0, ix("5"), bytes(), {ServiceKind::Reliable, 1})).at(0);
        double t = 0.0;
        for (int i = 0; i < 2; ++i) {
            t += timer.delay_ms;
            n.on_link_idle(t, ix("12"));
            timer = only<SetTimer>(n.handle_timer(t, timer.id)).at(0);
        }
        auto last = n.handle_timer(t + timer.delay_ms, timer.id);
        CHECK(only<Drop>(last).at(0).reason == DropReason::GaveUp);
        CHECK(n.rel_outstanding() == 0);
    }

    TEST_CASE("hop gap triggers a nack answered from the upstream cache") {
        auto up = chain_node("12");
        auto down_node = chain_node("13");
        std::vector<FramePtr> wire;
        for (int i = 0; i < 7; ++i) {
            auto fx = up.client_send(i * 1.0, ix("5"), bytes(), {ServiceKind::Priority, 1});
            for (auto& t : only<LinkTransmit>(fx)) wire.push_back(t.frame);
            for (auto& t : only<LinkTransmit>(up.on_link_idle(i * 1.0 + 0.5, ix("13")))) wire.push_back(t.frame);
        }
        REQUIRE(wire.size() == 7);
        CHECK(wire[4]->seq == 5);
        CHECK(wire[5]->seq == 6);
        Effects fx;
        for (int i = 0; i < 7; ++i) {
            if (i == 5) continue;
            fx = down_node.handle_frame(10.0 + i, ix("12"), wire[i]);
        }
        auto arm = only<SetTimer>(fx);
        REQUIRE_FALSE(arm.empty());
        auto nack_fx = down_node.handle_timer(20.0, arm.back().id);
        auto nacks = only<LinkTransmit>(nack_fx);
        REQUIRE(nacks.size() == 1);
        CHECK(nacks[0].neighbor == ix("12"));
        CHECK(nacks[0].frame->kind == FrameKind::HopNack);
        CHECK(nacks[0].frame->missing == std::vector<std::uint64_t>{6});

        auto resend = only<LinkTransmit>(up.handle_frame(21.0, ix("13"), nacks[0].frame));
        REQUIRE(resend.size() == 1);
        CHECK(resend[0].neighbor == ix("13"));
        CHECK(resend[0].frame->seq == 6);
        CHECK(up.stats().hop_retransmits == 1);
        const auto queued = down_node.queued(ix("14"));
        auto fixed = down_node.handle_frame(22.0, ix("12"), resend[0].frame);
        CHECK(only<LinkTransmit>(fixed).size() + down_node.queued(ix("14")) - queued == 1);
    }

    TEST_CASE("nack for an evicted entry is unrecoverable") {
        NodeConfig cfg;
        cfg.cache_capacity = 2;
        auto up = chain_node("12", cfg);
        for (int i = 0; i < 5; ++i) {
            up.client_send(i * 1.0, ix("5"), bytes(), {ServiceKind::Priority, 1});
            up.on_link_idle(i * 1.0 + 0.5, ix("13"));
        }
        auto nack = std::make_shared<Frame>();
        nack->kind = FrameKind::HopNack;
        nack->src = ix("13");
        nack->dst = ix("12");
        nack->missing = {1};
        auto drops = only<Drop>(up.handle_frame(10.0, ix("13"), nack));
        REQUIRE(drops.size() == 1);
        CHECK(drops[0].reason == DropReason::Unrecoverable);
    }

    TEST_CASE("end-to-end layer recovers what the link layer does not") {
        auto lossy = [] {
            std::vector<NodeDecl> nodes;
            auto base = spon::testing::chain();
            for (NodeIndex i = 0; i < base->node_count(); ++i) nodes.push_back({base->node(i), {}});
            auto links = base->links();
            for (auto& l : links)
                if (l.a.str() == "12" && l.b.str() == "13") l.loss = 0.3;
            return std::make_shared<const Topology>(std::move(nodes), std::move(links));
        }();
        auto delivered = [&](ServiceKind kind) {
            netsim::SimConfig cfg;
            cfg.node.hop_recovery = false;
            netsim::Simulator sim(lossy, cfg, 9);
            int got = 0;
            sim.on_deliver([&](TimeMs, NodeIndex node, const Deliver&) { got += node == ix("5"); });
            for (int i = 0; i < 50; ++i) sim.schedule_send(i * 5.0, ix("1"), ix("5"), bytes(), {kind, 1});
            sim.run(100000.0);
            return got;
        };
        CHECK(delivered(ServiceKind::Reliable) == 50);
        CHECK(delivered(ServiceKind::Priority) < 50);
    }

    TEST_CASE("rerouting around the meltdown and back") {
        auto n = chain_node("1");
        TopologyView v(spon::testing::chain());
        auto melted = v;
        for (auto id : {"2", "7", "14"}) melted = apply_fault(melted, NodeChange{NodeId(id), false});
        n.recompute_routes(0.0, melted);
        const auto& only_path = n.routes(ix("5"), 4);
        REQUIRE(only_path.size() == 1);
        CHECK(only_path[0].hops == std::vector<NodeIndex>{ix("1"), ix("9"), ix("10"), ix("11"), ix("5")});
        n.recompute_routes(1.0, v);
        CHECK(n.routes(ix("5"), 1).at(0).latency_ms == 16.0);
        auto t = targets(n.client_send(2.0, ix("5"), bytes(), {ServiceKind::Priority, 1}));
        CHECK(t == std::vector<NodeIndex>{ix("12")});
    }

    TEST_CASE("no-op view change leaves state alone") {
        auto topo = spon::testing::chain();
        NodeState n(ix("1"), TopologyView(topo));
        auto before = n.routes(ix("5"), 2);
        auto fx = n.recompute_routes(0.0, TopologyView(topo));
        CHECK(fx.empty());
        CHECK(n.routes(ix("5"), 2) == before);
        CHECK(n.view() == TopologyView(topo));
    }

    TEST_CASE("bad input") {
        auto n = chain_node("1");
        Bytes junk{1, 2, 3};
        CHECK(only<Drop>(n.handle_raw_frame(0.0, ix("12"), junk)).at(0).reason == DropReason::Malformed);
        NodeConfig small;
        small.max_payload = 8;
        auto m = chain_node("1", small);
        CHECK_THROWS_AS(m.client_send(0.0, ix("5"), bytes(9), {ServiceKind::Priority, 1}), PayloadTooLarge);
        auto cut = chain_node("1");
        TopologyView v(spon::testing::chain());
        for (auto id : {"2", "6", "9", "12"}) v = apply_fault(v, NodeChange{NodeId(id), false});
        cut.recompute_routes(0.0, v);
        CHECK_THROWS_AS(cut.client_send(0.0, ix("5"), bytes(), {ServiceKind::Priority, 1}), NoPathError);
    }

    TEST_CASE("sequence window") {
        SeqWindow w(4);
        CHECK(w.observe(1));
        CHECK_FALSE(w.observe(1));
        CHECK(w.observe(3));
        CHECK(w.observe(2));
        CHECK(w.observe(9));
        CHECK_FALSE(w.observe(2));
        CHECK(w.length() <= 4);
        CHECK(w.observe(9, 1));
        CHECK_FALSE(w.observe(9, 1));
    }
}
