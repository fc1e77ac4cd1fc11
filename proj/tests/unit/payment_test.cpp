#include <doctest.h>

#include <deque>
#include <functional>
#include <limits>
#include <set>
#include <numeric>

#include "spon/payment.hpp"
#include "spon/scenario.hpp"
#include "spon_test_support.hpp"

using namespace spon::payment;
using spon::testing::FakePaymentContext;

namespace {

/// Synchronous message pump between actors; timers fire in due order.
struct Net {
    std::map<std::string, std::shared_ptr<Actor>> actors;
    std::map<std::string, FakePaymentContext> ctx;
    /// False drops the packet.
    std::function<bool(const std::string& to, const IlpPacket&)> filter;
    double now = 0.0;

    void add(const std::string& name, std::shared_ptr<Actor> a) {
        actors[name] = std::move(a);
        ctx[name].name = name;
    }
    void start() {
        for (auto& [n, a] : actors) a->start(ctx[n]);
    }
    void run(double until = 1e9) {
        for (;;) {
            bool moved = false;
            for (auto& [name, c] : ctx) {
                auto out = std::move(c.sent);
                c.sent.clear();
                for (auto& s : out) {
                    moved = true;
                    if (!actors.count(s.to) || (filter && !filter(s.to, s.packet))) continue;
                    actors[s.to]->on_packet(ctx[s.to], name, s.packet);
                }
            }
            if (moved) continue;
            std::string who;
            std::uint64_t id = 0;
            double due = std::numeric_limits<double>::infinity();
            for (auto& [name, c] : ctx)
                for (auto& [tid, t] : c.timers)
                    if (t.first < due) {
                        due = t.first;
                        who = name;
                        id = tid;
                    }
            if (who.empty() || due > until) return;
            now = due;
            for (auto& [n, c] : ctx) c.now_ms = now;
            auto token = ctx[who].timers[id].second;
            ctx[who].timers.erase(id);
            actors[who]->on_timer(ctx[who], token);
        }
    }
};

struct Path2 {
    Ledger la{"la", "XRP"};
    Ledger lab{"lab", "XRP"};
    Ledger lb{"lb", "XRP"};
    std::shared_ptr<Connector> c1;
    std::shared_ptr<Connector> c2;
    std::shared_ptr<Receiver> bob;
    Net net;

    Path2(std::uint32_t fee1, std::uint32_t fee2) {
        c1 = std::make_shared<Connector>(ConnectorConfig{"g.c1", 1000.0, fee1});
        c2 = std::make_shared<Connector>(ConnectorConfig{"g.c2", 1000.0, fee2});
        bob = std::make_shared<Receiver>("g.bob", "s3cret");
        c1->add_peer("alice", {&la, "c1", "alice"});
        c1->add_peer("c2", {&lab, "c1", "c2"});
        c2->add_peer("c1", {&lab, "c2", "c1"});
        c2->add_peer("bob", {&lb, "c2", "bob"});
        bob->add_peer("c2", {&lb, "bob", "c2"});
        c1->add_route("g.bob", "c2");
        c2->add_route("g.bob", "bob");
        la.mint("alice", 1'000'000);
        lab.mint("c1", 1'000'000);
        lb.mint("c2", 1'000'000);
        net.add("c1", c1);
        net.add("c2", c2);
        net.add("bob", bob);
    }

    std::shared_ptr<StreamSender> sender(Amount total, Amount packet, unsigned retries = 10) {
        StreamConfig sc;
        sc.peer = "c1";
        sc.dst_address = "g.bob";
        sc.secret = "s3cret";
        sc.max_retries = retries;
        auto s = std::make_shared<StreamSender>(sc, std::vector<PaymentSpec>{{1, total, packet}});
        net.add("alice", s);
        return s;
    }

    SettleReport settle() { return settle_check({&la, &lab, &lb}, {c1.get(), c2.get()}); }
};

/// One connector between "alice" (ledger l1) and "bob" (ledger l2).
struct Hop {
    Ledger l1;
    Ledger l2;
    Connector c;
    FakePaymentContext ctx;

    explicit Hop(std::string cur_in = "XRP", std::string cur_out = "XRP", std::uint32_t fee = 0)
        : l1("l1", std::move(cur_in)), l2("l2", std::move(cur_out)), c(ConnectorConfig{"g.c", 1000.0, fee}) {
        c.add_peer("alice", {&l1, "c", "alice"});
        c.add_peer("bob", {&l2, "c", "bob"});
        c.add_route("g.bob", "bob");
        l1.mint("alice", 1000);
        ctx.name = "c";
        ctx.now_ms = 100.0;
    }

    IlpPacket prepare(Amount amount = 100, std::uint32_t seq = 0, const std::string& dst = "g.bob") {
        return IlpPacket::prepare(7, seq, dst, amount, make_condition(make_preimage("k", 7, seq)), 30000.0);
    }
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

std::vector<double> metric(const spon::experiments::RunOutput& out, const std::string& name) {
    std::vector<double> v;
    for (const auto& r : out.rows)
        if (r.metric == name) v.push_back(r.value);
    return v;
}

}  // namespace

TEST_SUITE("payment") {
    TEST_CASE("splitting") {
        CHECK(split_payment(100000, 100).size() == 1000);
        CHECK(split_payment(80000, 50).size() == 1600);
        CHECK(split_payment(100, 1000) == std::vector<Amount>{100});
        CHECK(split_payment(250, 100) == std::vector<Amount>{100, 100, 50});
        CHECK_THROWS_AS(split_payment(0, 10), std::invalid_argument);
        CHECK_THROWS_AS(split_payment(10, 0), std::invalid_argument);
    }

    TEST_CASE("identity forward keeps the amount and shortens expiry") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare());
        REQUIRE(h.ctx.sent.size() == 1);
        const auto& out = h.ctx.sent[0];
        CHECK(out.to == "bob");
        CHECK(out.packet.amount == 100);
        CHECK(out.packet.expiry_ms == 29000.0);
        CHECK(h.l1.balance("alice") == 900);
        CHECK(h.l1.held() == 100);
    }

    TEST_CASE("rate and fee") {
        Hop h("EUR", "XRP", 10000);
        h.c.set_rate("EUR", "XRP", {2, 1});
        CHECK(*h.c.forward_amount(100, "EUR", "XRP") == 100 * 2 * 99 / 100);
        h.c.on_packet(h.ctx, "alice", h.prepare());
        REQUIRE(h.ctx.sent.size() == 1);
        CHECK(h.ctx.sent[0].packet.amount == 198);
        CHECK_FALSE(h.c.forward_amount(100, "XRP", "EUR"));
    }

    TEST_CASE("rejections") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare(100, 0, "g.nobody"));
        REQUIRE(h.ctx.sent.size() == 1);
        CHECK(h.ctx.sent[0].to == "alice");
        CHECK(h.ctx.sent[0].packet.kind == PacketKind::Reject);
        CHECK(h.ctx.sent[0].packet.code == RejectCode::NoRoute);

        h.c.on_packet(h.ctx, "alice", h.prepare(5000, 1));
        CHECK(h.ctx.sent.back().packet.code == RejectCode::Insufficient);

        h.ctx.now_ms = 30000.0;
        h.c.on_packet(h.ctx, "alice", h.prepare(10, 2));
        CHECK(h.ctx.sent.back().packet.code == RejectCode::Expired);
        CHECK(h.l1.balance("alice") == 1000);
    }

    TEST_CASE("valid fulfill settles and relays") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare());
        h.c.on_packet(h.ctx, "bob", IlpPacket::fulfill(7, 0, make_preimage("k", 7, 0)));
        REQUIRE(h.ctx.sent.size() == 2);
        CHECK(h.ctx.sent[1].to == "alice");
        CHECK(h.ctx.sent[1].packet.kind == PacketKind::Fulfill);
        CHECK(h.l1.balance("alice") == 900);
        CHECK(h.l1.balance("c") == 100);
        CHECK(h.l1.active_holds() == 0);
        h.c.on_packet(h.ctx, "bob", IlpPacket::fulfill(7, 0, make_preimage("k", 7, 0)));
        CHECK(h.l1.balance("c") == 100);
        CHECK(h.c.stats().duplicates == 1);
    }

    TEST_CASE("wrong preimage rejects upstream") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare());
        h.c.on_packet(h.ctx, "bob", IlpPacket::fulfill(7, 0, make_preimage("wrong", 7, 0)));
        REQUIRE(h.ctx.sent.size() == 2);
        CHECK(h.ctx.sent[1].packet.kind == PacketKind::Reject);
        CHECK(h.ctx.sent[1].packet.code == RejectCode::BadFulfillment);
        CHECK(h.l1.balance("alice") == 1000);
        CHECK(h.l1.active_holds() == 0);
    }

    TEST_CASE("fulfill after expiry is a mismatch") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare());
        REQUIRE(h.ctx.timers.size() == 1);
        auto [due, token] = h.ctx.timers.begin()->second;
        CHECK(due == 29000.0);
        h.ctx.now_ms = due;
        h.c.on_timer(h.ctx, token);
        CHECK(h.ctx.sent.back().packet.code == RejectCode::Expired);
        h.ctx.now_ms = due + 1.0;
        h.c.on_packet(h.ctx, "bob", IlpPacket::fulfill(7, 0, make_preimage("k", 7, 0)));
        CHECK(h.c.stats().mismatches == 1);
        CHECK(h.l1.balance("alice") == 1000);
        CHECK(h.l1.balance("c") == 0);
    }

    TEST_CASE("duplicate prepare is idempotent") {
        Hop h;
        h.c.on_packet(h.ctx, "alice", h.prepare());
        h.c.on_packet(h.ctx, "alice", h.prepare());
        CHECK(h.l1.held() == 100);
        CHECK(h.ctx.sent.size() == 2);
        CHECK(h.ctx.sent[1].packet == h.ctx.sent[0].packet);
    }

    TEST_CASE("complete stream conserves value") {
        Path2 w(0, 0);
        auto s = w.sender(100000, 100);
        w.net.start();
        w.net.run();
        REQUIRE(s->results().at(0).state == StreamState::Complete);
        CHECK(s->results()[0].packets == 1000);
        CHECK(w.la.balance("alice") == 1'000'000 - 100000);
        CHECK(w.lb.balance("bob") == 100000);
        CHECK(w.bob->total_received() == 100000);
        auto rep = w.settle();
        CHECK_MESSAGE(rep.ok, rep.describe());
    }

    TEST_CASE("connector gains equal their fees") {
        const std::uint32_t fee1 = 1000, fee2 = 2500;
        Path2 w(fee1, fee2);
        auto s = w.sender(100000, 1000);
        w.net.start();
        w.net.run();
        REQUIRE(s->results().at(0).state == StreamState::Complete);
        Amount gain1 = 0, gain2 = 0, paid = 0;
        for (Amount a : split_payment(100000, 1000)) {
            Amount hop1 = a * (1'000'000 - fee1) / 1'000'000;
            Amount hop2 = hop1 * (1'000'000 - fee2) / 1'000'000;
            gain1 += a - hop1;
            gain2 += hop1 - hop2;
            paid += hop2;
        }
        CHECK(w.la.balance("c1") - (w.lab.minted_to("c1") - w.lab.balance("c1")) == gain1);
        CHECK(w.lab.balance("c2") - (w.lb.minted_to("c2") - w.lb.balance("c2")) == gain2);
        CHECK(w.lb.balance("bob") == paid);
        auto rep = w.settle();
        CHECK_MESSAGE(rep.ok, rep.describe());
    }

    TEST_CASE("failed stream voids its holds") {
        Path2 w(0, 0);
        auto s = w.sender(1000, 100, 2);
        int prepares = 0;
        w.net.filter = [&](const std::string& to, const IlpPacket& p) {
            return to != "bob" || p.kind != PacketKind::Prepare || ++prepares <= 3;
        };
        w.net.start();
        w.net.run();
        const auto& r = s->results().at(0);
        CHECK(r.state == StreamState::Failed);
        CHECK(r.fulfilled_amount == 300);
        auto rep = w.settle();
        CHECK_MESSAGE(rep.ok, rep.describe());
        CHECK(w.la.active_holds() == 0);
        CHECK(w.lab.active_holds() == 0);
        CHECK(w.la.balance("alice") == 1'000'000 - r.fulfilled_amount);
        CHECK(w.lb.balance("bob") == r.fulfilled_amount);
    }

    TEST_CASE("unreachable ping times out every probe") {
        Net net;
        PingConfig pc;
        pc.peer = "void";
        pc.dst_address = "g.bob";
        pc.secret = "x";
        auto p = std::make_shared<PingSender>(pc);
        net.add("alice", p);
        net.start();
        net.run();
        CHECK(p->done());
        CHECK(p->samples().empty());
        CHECK(p->timeouts() == 100);
    }

    TEST_CASE("ping over baseline and overlay") {
        using namespace spon::experiments;
        RunSpec spec;
        spec.scenario = ScenarioName::ChainPingLoss;
        spec.params = default_params(spec.scenario);
        spec.seed = 11;
        spec.variant = Variant::make_baseline();
        auto base = run_once(spec);
        REQUIRE_FALSE(base.failed);
        auto b = metric(base, "rtt_ms");
        REQUIRE(b.size() == 100);
        CHECK(mean(b) == doctest::Approx(32.0).epsilon(0.01));
        spec.variant = Variant::overlay(spon::overlay::ServiceKind::Priority, 0);
        auto over = run_once(spec);
        REQUIRE_FALSE(over.failed);
        auto o = metric(over, "rtt_ms");
        REQUIRE(o.size() == 100);
        CHECK(mean(o) >= 32.0);
        CHECK(mean(o) <= 1.10 * 32.0);
        CHECK(over.settle_ok);
    }

    TEST_CASE("packet codec") {
        auto p = IlpPacket::prepare(3, 4, "g.bob", 77, make_condition(make_preimage("s", 3, 4)), 1234.5);
        CHECK(decode_packet(encode_packet(p)) == p);
        auto f = IlpPacket::fulfill(3, 4, make_preimage("s", 3, 4));
        CHECK(decode_packet(encode_packet(f)) == f);
        auto r = IlpPacket::reject(3, 4, RejectCode::LinkDown);
        CHECK(decode_packet(encode_packet(r)) == r);
        auto bytes = encode_packet(p);
        bytes.pop_back();
        CHECK_THROWS_AS(decode_packet(bytes), MalformedPacket);
        CHECK(address_has_prefix("g.b.bob", "g.b"));
        CHECK_FALSE(address_has_prefix("g.bx", "g.b"));
    }

    TEST_CASE("sha256 known answer") {
        std::string abc = "abc";
        auto h = sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()});
        CHECK(to_hex(h) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    TEST_CASE("ledger holds") {
        Ledger l("x", "XRP");
        l.open("b");
        l.mint("a", 50);
        auto h = l.hold("a", "b", 30, 10.0);
        CHECK(l.total() == 50);
        CHECK_FALSE(l.execute(h, 10.0));
        CHECK(l.balance("a") == 50);
        auto h2 = l.hold("a", "b", 20, 10.0);
        CHECK(l.execute(h2, 5.0));
        CHECK(l.execute(h2, 6.0));
        CHECK(l.balance("b") == 20);
        CHECK_THROWS_AS(l.hold("a", "b", 31, 10.0), InsufficientFunds);
    }
}
