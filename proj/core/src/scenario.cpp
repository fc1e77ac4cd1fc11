#include "spon/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spon/assets.hpp"

namespace spon::experiments {

namespace {

using overlay::ServiceKind;
using payment::Amount;

struct NameEntry {
    ScenarioName name;
    const char* text;
};

constexpr NameEntry kNames[] = {
    {ScenarioName::ChainPingLoss, "chain-ping-loss"},   {ScenarioName::ChainStreamLoss, "chain-stream-loss"},
    {ScenarioName::GlobalStreamLoss, "global-stream-loss"}, {ScenarioName::ChainMeltdown, "chain-meltdown"},
    {ScenarioName::GlobalMeltdown, "global-meltdown"},  {ScenarioName::Fairness, "fairness"},
    {ScenarioName::Bgp, "bgp"},
};

const char* topology_name(ScenarioName s) {
    switch (s) {
        case ScenarioName::ChainPingLoss:
        case ScenarioName::ChainStreamLoss:
        case ScenarioName::ChainMeltdown: return "chain";
        case ScenarioName::GlobalStreamLoss:
        case ScenarioName::GlobalMeltdown: return "global";
        case ScenarioName::Fairness: return "fairness";
        case ScenarioName::Bgp: return "bgp";
    }
    return "chain";
}

std::shared_ptr<const Topology> load_canonical(ScenarioName s, const std::optional<std::pair<NodeId, NodeId>>& loss_link,
                                               double loss) {
    auto text = canonical_topology(topology_name(s));
    if (!text) throw std::logic_error("missing built-in topology");
    Topology base = parse_topology(*text);
    if (!loss_link || loss == 0.0) return std::make_shared<const Topology>(std::move(base));
    if (!base.link_between(loss_link->first, loss_link->second)) throw TopologyError("loss link not in topology");
    std::vector<NodeDecl> nodes;
    for (NodeIndex n = 0; n < base.node_count(); ++n) nodes.push_back({base.node(n), base.ases_of(n)});
    std::vector<LinkSpec> links = base.links();
    for (auto& l : links) {
        if ((l.a == loss_link->first && l.b == loss_link->second) || (l.a == loss_link->second && l.b == loss_link->first))
            l.loss = loss;
    }
    return std::make_shared<const Topology>(std::move(nodes), std::move(links), base.attachments());
}

std::vector<NodeId> ids(std::initializer_list<const char*> list) {
    std::vector<NodeId> out;
    for (auto s : list) out.emplace_back(s);
    return out;
}

payment::ServiceMap service_map(const Variant& v) {
    payment::ServiceMap m;
    m.prepare.service = v.service;
    m.fulfill.service = v.service;
    m.reject.service = v.service;
    return m;
}

void add_row(std::vector<MetricRow>& rows, const RunSpec& spec, std::string metric, std::uint64_t index, double value) {
    rows.push_back({to_string(spec.scenario), spec.variant.name, spec.loss_pct, spec.rep, spec.seed, std::move(metric),
                    index, value});
}

// ---------------------------------------------------------------------------
// Payment chain: alice -local- c1 -overlay|direct- c2 -local- bob

struct PaymentWorld {
    payment::Ledger xa{"xrp-a", "XRP"};
    payment::Ledger xab{"xrp-ab", "XRP"};
    payment::Ledger xb{"xrp-b", "XRP"};
    std::shared_ptr<payment::TxLog> log = std::make_shared<payment::TxLog>();
    std::shared_ptr<payment::Connector> c1;
    std::shared_ptr<payment::Connector> c2;
    std::shared_ptr<payment::Receiver> bob;
    std::unique_ptr<netsim::Simulator> sim;
};

std::unique_ptr<PaymentWorld> build_payment_world(const RunSpec& spec, std::shared_ptr<payment::Actor> sender,
                                                  const std::string& secret, Amount funds) {
    const auto& prm = spec.params;
    const double loss = spec.loss_pct / 100.0;
    auto topo = load_canonical(spec.scenario, prm.loss_link, loss);

    auto w = std::make_unique<PaymentWorld>();
    auto sim_cfg = prm.sim;
    sim_cfg.record_trace = spec.record_trace;
    w->sim = std::make_unique<netsim::Simulator>(topo, sim_cfg, spec.seed);

    w->c1 = std::make_shared<payment::Connector>(payment::ConnectorConfig{"g.c1", 1000.0, prm.connector_fee_ppm});
    w->c1->add_peer("alice", {&w->xa, "c1", "alice"});
    w->c1->add_peer("c2", {&w->xab, "c1", "c2"});
    w->c1->add_route("g.bob", "c2");
    w->c2 = std::make_shared<payment::Connector>(payment::ConnectorConfig{"g.c2", 1000.0, prm.connector_fee_ppm});
    w->c2->add_peer("c1", {&w->xab, "c2", "c1"});
    w->c2->add_peer("bob", {&w->xb, "c2", "bob"});
    w->c2->add_route("g.bob", "bob");
    w->bob = std::make_shared<payment::Receiver>("g.bob", secret);
    w->bob->add_peer("c2", {&w->xb, "bob", "c2"});
    w->xa.mint("alice", funds);
    w->xab.mint("c1", funds);
    w->xb.mint("c2", funds);

    payment::PeerBinding local;
    payment::PeerBinding middle;
    middle.kind = spec.variant.baseline ? payment::TransportKind::Direct : payment::TransportKind::Overlay;
    middle.services = service_map(spec.variant);

    auto pa = std::make_shared<payment::PaymentClient>(std::move(sender), w->log);
    pa->bind_peer("c1", local);
    auto p1 = std::make_shared<payment::PaymentClient>(w->c1, w->log);
    p1->bind_peer("alice", local);
    p1->bind_peer("c2", middle);
    auto p2 = std::make_shared<payment::PaymentClient>(w->c2, w->log);
    p2->bind_peer("c1", middle);
    p2->bind_peer("bob", local);
    auto pb = std::make_shared<payment::PaymentClient>(w->bob, w->log);
    pb->bind_peer("c2", local);

    w->sim->add_client("alice", pa);
    w->sim->add_client("c1", p1);
    w->sim->add_client("c2", p2);
    w->sim->add_client("bob", pb);

    if (spec.variant.baseline) {
        netsim::DirectLinkSpec d;
        d.a = "c1";
        d.b = "c2";
        d.latency_ms = prm.baseline_latency_ms;
        d.loss = loss;
        if (spec.variant.pinned_path) {
            d.pinned_path = spec.variant.pinned_path;
            d.latency_ms = 0.0;
            const auto& p = *spec.variant.pinned_path;
            for (std::size_t i = 0; i + 1 < p.size(); ++i) {
                auto l = topo->link_between(p[i], p[i + 1]);
                if (!l) throw TopologyError("pinned path uses a missing link");
                d.latency_ms += topo->link(*l).latency_ms;
            }
        }
        if (spec.scenario == ScenarioName::Bgp) d.as_pair = std::pair<AsNumber, AsNumber>{2, 4};
        w->sim->add_direct_link(d);
    }
    if (spec.scenario == ScenarioName::Bgp) {
        auto u = netsim::AsUnderlay::from_topology(*topo, {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 1}});
        w->sim->set_underlay(netsim::apply_hijack(std::move(u), netsim::Hijack::victim_pair(2, 4)));
    }
    if (!prm.meltdown_nodes.empty())
        w->sim->schedule(netsim::meltdown_schedule(*topo, prm.meltdown_nodes, prm.meltdown_period_ms, prm.meltdown_cycles));
    return w;
}

void finish_payment_run(const RunSpec& spec, PaymentWorld& w, RunOutput& out) {
    auto rep = payment::settle_check({&w.xa, &w.xab, &w.xb}, {w.c1.get(), w.c2.get()});
    out.settle_ok = rep.ok;
    out.settle_report = rep.describe();
    add_row(out.rows, spec, "settle_ok", 0, rep.ok ? 1.0 : 0.0);
    add_row(out.rows, spec, "mismatches", 0,
            static_cast<double>(w.c1->stats().mismatches + w.c2->stats().mismatches));
}

void stream_rows(const RunSpec& spec, const std::vector<payment::PaymentResult>& results, RunOutput& out) {
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const bool complete = r.state == payment::StreamState::Complete;
        if (complete) add_row(out.rows, spec, "payment_latency_ms", i, r.latency_ms());
        add_row(out.rows, spec, "complete", i, complete ? 1.0 : 0.0);
        add_row(out.rows, spec, "fulfilled_amount", i, static_cast<double>(r.fulfilled_amount));
        add_row(out.rows, spec, "unrecovered", i, static_cast<double>(r.packets - r.fulfilled_packets));
        add_row(out.rows, spec, "retries", i, static_cast<double>(r.retries));
    }
}

/// Down windows of the meltdown in which the stream made no progress.
void stall_rows(const RunSpec& spec, const std::vector<payment::PaymentResult>& results, RunOutput& out) {
    const auto& prm = spec.params;
    if (prm.meltdown_nodes.empty() || results.empty()) return;
    const auto& r = results.front();
    unsigned windows = 0;
    unsigned stalled = 0;
    for (unsigned c = 0; c < prm.meltdown_cycles; ++c) {
        const double down = prm.meltdown_period_ms * (2 * c + 1);
        const double up = down + prm.meltdown_period_ms;
        if (r.start_ms >= down || (r.state == payment::StreamState::Complete && r.end_ms <= down)) continue;
        ++windows;
        const double from = down + 1000.0;
        bool progress = std::any_of(r.fulfilled_at.begin(), r.fulfilled_at.end(),
                                    [&](double t) { return !std::isnan(t) && t >= from && t < up; });
        if (!progress) ++stalled;
    }
    add_row(out.rows, spec, "down_windows", 0, windows);
    add_row(out.rows, spec, "stalled_windows", 0, stalled);
}

void run_stream(const RunSpec& spec, RunOutput& out) {
    const auto& prm = spec.params;
    const std::string secret = "secret-" + std::to_string(spec.seed);
    payment::StreamConfig sc;
    sc.peer = "c1";
    sc.dst_address = "g.bob";
    sc.secret = secret;
    sc.window = prm.window;
    std::vector<payment::PaymentSpec> payments;
    for (unsigned i = 0; i < prm.payments; ++i) payments.push_back({i + 1, prm.payment_total, prm.packet_amount});
    auto sender = std::make_shared<payment::StreamSender>(sc, payments);
    const Amount funds = prm.payment_total * static_cast<Amount>(prm.payments);
    auto w = build_payment_world(spec, sender, secret, funds);
    out.trace = w->sim->run(prm.horizon_ms);
    out.payments = sender->results();
    stream_rows(spec, out.payments, out);
    stall_rows(spec, out.payments, out);
    finish_payment_run(spec, *w, out);
    out.txlog = *w->log;
}

void run_ping(const RunSpec& spec, RunOutput& out) {
    const auto& prm = spec.params;
    const std::string secret = "secret-" + std::to_string(spec.seed);
    payment::PingConfig pc;
    pc.peer = "c1";
    pc.dst_address = "g.bob";
    pc.secret = secret;
    pc.count = prm.ping_count;
    pc.interval_ms = prm.ping_interval_ms;
    auto sender = std::make_shared<payment::PingSender>(pc);
    auto w = build_payment_world(spec, sender, secret, static_cast<Amount>(prm.ping_count));
    out.trace = w->sim->run(prm.horizon_ms);
    const auto& rtts = sender->rtts();
    for (std::size_t i = 0; i < rtts.size(); ++i)
        if (rtts[i]) add_row(out.rows, spec, "rtt_ms", i, *rtts[i]);
    add_row(out.rows, spec, "timeouts", 0, sender->timeouts());
    finish_payment_run(spec, *w, out);
    out.txlog = *w->log;
}

// ---------------------------------------------------------------------------
// Fairness

class LoadClient : public netsim::Client {
  public:
    LoadClient(std::string dst, std::function<double(double)> rate_mbps, std::size_t payload, unsigned streams,
               double stop_ms, double idle_poll_ms, double deadline_ms, overlay::ServiceClass service)
        : dst_(std::move(dst)), rate_(std::move(rate_mbps)), payload_(payload), streams_(std::max(1u, streams)),
          stop_ms_(stop_ms), idle_poll_ms_(idle_poll_ms), deadline_ms_(deadline_ms), service_(service) {}

    void on_start(netsim::ClientContext& ctx) override { ctx.set_timer(0.0, 0); }

    void on_message(netsim::ClientContext&, const netsim::Envelope&) override {}

    void on_timer(netsim::ClientContext& ctx, std::uint64_t) override {
        if (ctx.now() >= stop_ms_) return;
        const double mbps = rate_(ctx.now());
        if (mbps <= 0.0) {
            ctx.set_timer(idle_poll_ms_, 0);
            return;
        }
        overlay::Bytes body(payload_, 0);
        body[0] = static_cast<std::uint8_t>(stream_++ % streams_);
        overlay::SendOptions opts;
        opts.deadline_ms = ctx.now() + deadline_ms_;
        ctx.send_overlay(dst_, std::move(body), service_, opts);
        ctx.set_timer(static_cast<double>(payload_) * 8.0 / (mbps * 1000.0), 0);
    }

  private:
    std::string dst_;
    std::function<double(double)> rate_;
    std::size_t payload_;
    unsigned streams_;
    double stop_ms_;
    double idle_poll_ms_;
    double deadline_ms_;
    overlay::ServiceClass service_;
    std::uint64_t stream_ = 0;
};

class SinkClient : public netsim::Client {
  public:
    void on_message(netsim::ClientContext&, const netsim::Envelope&) override { ++received; }
    std::uint64_t received = 0;
};

void run_fairness(const RunSpec& spec, RunOutput& out) {
    const auto& fp = spec.params.fairness;
    auto topo = load_canonical(ScenarioName::Fairness, std::nullopt, 0.0);
    auto sim_cfg = spec.params.sim;
    sim_cfg.record_trace = spec.record_trace;
    netsim::Simulator sim(topo, sim_cfg, spec.seed);

    const double ramp_ms =
        fp.malicious_present && !fp.malicious_full_from_start ? fp.clients_per_flow * fp.ramp_interval_ms : 0.0;
    const double end_ms = ramp_ms + fp.hold_ms;
    const double per_client = fp.capacity_mbps / std::max(1u, fp.clients_per_flow);

    auto honest = std::make_shared<LoadClient>(
        "c2", [&](double) { return fp.honest_mbps; }, fp.payload_bytes, fp.streams_per_client, end_ms,
        fp.ramp_interval_ms, fp.deadline_ms, spec.variant.service);
    auto malicious = std::make_shared<LoadClient>(
        "c2",
        [&](double t) {
            if (!fp.malicious_present) return 0.0;
            if (fp.malicious_full_from_start) return fp.capacity_mbps;
            double active = std::min<double>(fp.clients_per_flow, std::floor(t / fp.ramp_interval_ms) + 1.0);
            return active * per_client;
        },
        fp.payload_bytes, fp.streams_per_client, end_ms, fp.ramp_interval_ms, fp.deadline_ms, spec.variant.service);
    auto sink = std::make_shared<SinkClient>();
    sim.add_client("c5", honest);
    sim.add_client("c6", malicious);
    sim.add_client("c2", sink);

    const NodeIndex n2 = topo->index_of("2");
    const NodeIndex n5 = topo->index_of("5");
    const NodeIndex n6 = topo->index_of("6");
    const auto buckets = static_cast<std::size_t>(std::ceil(end_ms / 1000.0)) + 1;
    std::vector<double> bytes5(buckets, 0.0);
    std::vector<double> bytes6(buckets, 0.0);
    sim.on_arrival([&](TimeMs t, NodeIndex, NodeIndex to, const overlay::Frame& f, std::size_t size) {
        if (to != n2) return;
        const overlay::Frame* m = f.kind == overlay::FrameKind::HopData ? f.inner.get() : &f;
        if (!m || m->kind != overlay::FrameKind::Data) return;
        auto b = static_cast<std::size_t>(t / 1000.0);
        if (b >= buckets) return;
        if (m->src == n5) bytes5[b] += static_cast<double>(size);
        if (m->src == n6) bytes6[b] += static_cast<double>(size);
    });
    out.trace = sim.run(end_ms + 1000.0);

    const auto full = static_cast<std::size_t>(end_ms / 1000.0);
    for (std::size_t s = 0; s < full; ++s) {
        add_row(out.rows, spec, "honest_mbps", s, bytes5[s] * 8.0 / 1e6);
        add_row(out.rows, spec, "malicious_mbps", s, bytes6[s] * 8.0 / 1e6);
    }
    // Steady state: after the ramp (skipping the first second of warm-up).
    const auto first = static_cast<std::size_t>(std::max(1.0, ramp_ms / 1000.0));
    double max_mal = 0.0;
    double min_hon = std::numeric_limits<double>::infinity();
    double sum_hon = 0.0;
    double sum_mal = 0.0;
    std::size_t windows = 0;
    for (std::size_t s = first; s + 10 <= full; ++s) {
        double h = 0.0;
        double m = 0.0;
        for (std::size_t i = s; i < s + 10; ++i) {
            h += bytes5[i];
            m += bytes6[i];
        }
        const double cap_bytes = fp.capacity_mbps * 1e6 / 8.0 * 10.0;
        max_mal = std::max(max_mal, m / cap_bytes);
        min_hon = std::min(min_hon, h / cap_bytes);
        ++windows;
    }
    for (std::size_t s = first; s < full; ++s) {
        sum_hon += bytes5[s];
        sum_mal += bytes6[s];
    }
    const double steady_cap = fp.capacity_mbps * 1e6 / 8.0 * static_cast<double>(full > first ? full - first : 1);
    add_row(out.rows, spec, "honest_steady_share", 0, sum_hon / steady_cap);
    add_row(out.rows, spec, "malicious_steady_share", 0, sum_mal / steady_cap);
    if (windows > 0) {
        add_row(out.rows, spec, "malicious_max_share_10s", 0, max_mal);
        add_row(out.rows, spec, "honest_min_share_10s", 0, min_hon);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

const char* to_string(ScenarioName s) {
    for (const auto& e : kNames)
        if (e.name == s) return e.text;
    return "?";
}

ScenarioName parse_scenario(const std::string& name) {
    for (const auto& e : kNames)
        if (name == e.text) return e.name;
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

const std::vector<ScenarioName>& all_scenarios() {
    static const std::vector<ScenarioName> all = [] {
        std::vector<ScenarioName> v;
        for (const auto& e : kNames) v.push_back(e.name);
        return v;
    }();
    return all;
}

Variant Variant::make_baseline() {
    Variant v;
    v.name = "baseline";
    v.baseline = true;
    return v;
}

Variant Variant::overlay(overlay::ServiceKind kind, unsigned k) {
    Variant v;
    v.name = std::string(overlay::to_string(kind)) + "-" + (k == 0 ? std::string("fld") : "k" + std::to_string(k));
    v.service = {kind, static_cast<std::uint8_t>(k)};
    return v;
}

Variant Variant::baseline_pinned(std::string name, std::vector<NodeId> path) {
    Variant v = make_baseline();
    v.name = std::move(name);
    v.pinned_path = std::move(path);
    return v;
}

ScenarioParams default_params(ScenarioName s) {
    ScenarioParams p;
    switch (s) {
        case ScenarioName::ChainPingLoss:
            p.baseline_latency_ms = 16.0;
            p.loss_link = std::pair{NodeId("12"), NodeId("13")};
            p.horizon_ms = p.ping_count * p.ping_interval_ms + 60000.0;
            break;
        case ScenarioName::ChainStreamLoss:
            p.payments = 20;
            p.payment_total = 100000;
            p.packet_amount = 100;
            p.baseline_latency_ms = 16.0;
            p.loss_link = std::pair{NodeId("12"), NodeId("13")};
            break;
        case ScenarioName::GlobalStreamLoss:
            p.payments = 16;
            p.payment_total = 100000;
            p.packet_amount = 500;
            p.baseline_latency_ms = 148.0;
            p.loss_link = std::pair{NodeId("HKG"), NodeId("SJC")};
            break;
        case ScenarioName::ChainMeltdown:
            p.payments = 1;
            p.payment_total = 100000;
            p.packet_amount = 10;
            p.baseline_latency_ms = 20.0;
            p.meltdown_nodes = ids({"2", "7", "14"});
            break;
        case ScenarioName::GlobalMeltdown:
            p.payments = 1;
            p.payment_total = 80000;
            p.packet_amount = 50;
            p.baseline_latency_ms = 151.0;
            p.meltdown_nodes = ids({"SJC", "NYC", "LON", "WAS", "JHU", "DFW", "ATL"});
            break;
        case ScenarioName::Fairness:
            break;
        case ScenarioName::Bgp:
            p.payments = 1;
            p.payment_total = 10000;
            p.packet_amount = 100;
            p.baseline_latency_ms = 15.0;
            break;
    }
    return p;
}

std::vector<Variant> standard_variants(ScenarioName s, overlay::ServiceKind kind, std::vector<unsigned> ks,
                                       bool with_baseline) {
    std::vector<Variant> v;
    if (with_baseline && s != ScenarioName::Fairness) {
        v.push_back(Variant::make_baseline());
        if (s == ScenarioName::ChainMeltdown) v.push_back(Variant::baseline_pinned("baseline-cut", ids({"1", "12", "13", "14", "5"})));
    }
    for (auto k : ks) v.push_back(Variant::overlay(kind, k));
    return v;
}

RunOutput run_once(const RunSpec& spec) {
    RunOutput out;
    try {
        switch (spec.scenario) {
            case ScenarioName::ChainPingLoss:
                run_ping(spec, out);
                break;
            case ScenarioName::Fairness:
                run_fairness(spec, out);
                break;
            default:
                run_stream(spec, out);
        }
    } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        add_row(out.rows, spec, "FAILED", 0, 1.0);
    }
    return out;
}

std::uint64_t rep_seed(std::uint64_t seed, unsigned rep) { return netsim::splitmix64(seed + rep); }

bool MetricReport::all_ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunInfo& r) { return !r.failed && r.settle_ok; });
}

MetricReport run_scenario(const ScenarioConfig& config) {
    if (config.reps < 1) throw std::invalid_argument("reps must be >= 1");
    if (config.variants.empty()) throw std::invalid_argument("no variants to run");
    MetricReport report;
    report.scenario = to_string(config.name);
    for (double loss : config.loss_pct) {
        if (loss < 0.0 || loss > 100.0) throw std::invalid_argument("loss percentage out of range");
        for (const auto& v : config.variants) {
            for (unsigned rep = 0; rep < config.reps; ++rep) {
                RunSpec spec;
                spec.scenario = config.name;
                spec.variant = v;
                spec.loss_pct = loss;
                spec.rep = rep;
                spec.seed = rep_seed(config.seed, rep);
                spec.params = config.params;
                spec.record_trace = config.record_trace;
                auto out = run_once(spec);
                report.rows.insert(report.rows.end(), out.rows.begin(), out.rows.end());
                report.runs.push_back({v.name, loss, rep, spec.seed, out.failed, out.error, out.settle_ok,
                                       out.settle_report, out.trace.events});
            }
        }
    }
    return report;
}

MetricReport fairness_scenario(const FairnessParams& params, std::uint64_t seed, unsigned reps) {
    ScenarioConfig cfg;
    cfg.name = ScenarioName::Fairness;
    cfg.variants = {Variant::overlay(ServiceKind::Priority, 1)};
    cfg.seed = seed;
    cfg.reps = reps;
    cfg.params = default_params(ScenarioName::Fairness);
    cfg.params.fairness = params;
    return run_scenario(cfg);
}

}  // namespace spon::experiments
