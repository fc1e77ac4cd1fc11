#include "spon/netsim.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace spon::netsim {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const char* frame_kind_name(overlay::FrameKind k) {
    switch (k) {
        case overlay::FrameKind::Data: return "data";
        case overlay::FrameKind::Ack: return "ack";
        case overlay::FrameKind::Nack: return "nack";
        case overlay::FrameKind::HopData: return "hop-data";
        case overlay::FrameKind::HopNack: return "hop-nack";
    }
    return "?";
}

constexpr std::uint8_t kEnvelopeMagic = 0xE1;

}  // namespace

// ---------------------------------------------------------------------------
// Schedules

void FaultSchedule::add(double time_ms, ScheduleChange change) {
    entries.push_back({time_ms, std::move(change)});
}

void FaultSchedule::validate(const Topology& topo) const {
    for (const auto& e : entries) {
        if (!(e.time_ms >= 0.0)) throw TopologyError("schedule entry with negative time");
        std::visit(
            [&](const auto& c) {
                using T = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<T, NodeChange> || std::is_same_v<T, BehaviorChange>) {
                    topo.index_of(c.node);
                } else if constexpr (std::is_same_v<T, LinkChange> || std::is_same_v<T, LossChange>) {
                    if (!topo.link_between(c.a, c.b))
                        throw TopologyError("unknown link " + c.a.str() + "-" + c.b.str());
                }
            },
            e.change);
    }
}

FaultSchedule meltdown_schedule(const Topology& topo, const std::vector<NodeId>& nodes, double period_ms,
                                unsigned cycles) {
    if (!(period_ms > 0.0)) throw std::invalid_argument("meltdown period must be positive");
    if (cycles < 1) throw std::invalid_argument("meltdown needs at least one cycle");
    for (const auto& n : nodes) topo.index_of(n);
    FaultSchedule s;
    for (unsigned c = 0; c < cycles; ++c) {
        for (const auto& n : nodes) s.add(period_ms * (2 * c + 1), NodeChange{n, false});
        for (const auto& n : nodes) s.add(period_ms * (2 * c + 2), NodeChange{n, true});
    }
    return s;
}

// ---------------------------------------------------------------------------
// Envelopes

Bytes encode_envelope(const Envelope& e) {
    if (e.src.size() > 255 || e.dst.size() > 255) throw std::invalid_argument("client id longer than 255 bytes");
    Bytes b;
    b.reserve(3 + e.src.size() + e.dst.size() + e.body.size());
    b.push_back(kEnvelopeMagic);
    b.push_back(static_cast<std::uint8_t>(e.src.size()));
    b.insert(b.end(), e.src.begin(), e.src.end());
    b.push_back(static_cast<std::uint8_t>(e.dst.size()));
    b.insert(b.end(), e.dst.begin(), e.dst.end());
    b.insert(b.end(), e.body.begin(), e.body.end());
    return b;
}

std::optional<Envelope> decode_envelope(const Bytes& b) {
    std::size_t pos = 0;
    if (b.size() < 3 || b[pos++] != kEnvelopeMagic) return std::nullopt;
    Envelope e;
    for (std::string* field : {&e.src, &e.dst}) {
        if (pos >= b.size()) return std::nullopt;
        std::size_t len = b[pos++];
        if (b.size() - pos < len) return std::nullopt;
        field->assign(reinterpret_cast<const char*>(b.data() + pos), len);
        pos += len;
    }
    e.body.assign(b.begin() + static_cast<std::ptrdiff_t>(pos), b.end());
    return e;
}

// ---------------------------------------------------------------------------
// Trace

std::uint64_t Trace::counter(const std::string& key) const {
    auto it = counters.find(key);
    return it == counters.end() ? 0 : it->second;
}

void Trace::write_csv(std::ostream& os) const {
    os << "time_ms,event,node,detail\n";
    for (const auto& r : rows) {
        os << fmt_double(r.time_ms) << ',' << r.event << ',' << r.node << ',';
        if (r.detail.find_first_of(",\"") != std::string::npos) {
            os << '"';
            for (char c : r.detail) os << (c == '"' ? "\"\"" : std::string(1, c));
            os << '"';
        } else {
            os << r.detail;
        }
        os << '\n';
    }
}

std::string Trace::summary() const {
    std::ostringstream os;
    os << "events=" << events << '\n';
    os << "end_time_ms=" << fmt_double(end_time_ms) << '\n';
    for (const auto& [k, v] : counters) os << k << '=' << v << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Simulator

enum class Simulator::EventKind : std::uint8_t {
    Arrival,
    LinkIdle,
    NodeTimer,
    ViewUpdate,
    Fault,
    NodeSend,
    ClientStart,
    ClientTimer,
    ClientMessage,
    ClientFailed,
    DirectAttempt,
};

class Simulator::Context : public ClientContext {
  public:
    Context(Simulator& sim, std::size_t idx) : sim_(sim), idx_(idx) {}

    TimeMs now() const override { return sim_.now_; }
    const std::string& self() const override { return sim_.clients_[idx_].id; }

    void send_local(const std::string& dst, Bytes body) override {
        Event ev;
        ev.kind = EventKind::ClientMessage;
        ev.a = static_cast<std::uint32_t>(client(dst));
        ev.env = std::make_shared<const Envelope>(Envelope{self(), dst, std::move(body)});
        sim_.count("local_msgs");
        sim_.push(sim_.now_ + sim_.config_.local_latency_ms, std::move(ev));
    }

    bool send_overlay(const std::string& dst, Bytes body, overlay::ServiceClass service,
                      overlay::SendOptions options) override {
        auto di = client(dst);
        NodeIndex src_node = sim_.clients_[idx_].node;
        NodeIndex dst_node = sim_.clients_[di].node;
        auto payload = std::make_shared<const Bytes>(encode_envelope({self(), dst, std::move(body)}));
        overlay::Effects fx;
        try {
            fx = sim_.nodes_[src_node].client_send(sim_.now_, dst_node, std::move(payload), service, options);
        } catch (const NoPathError&) {
            sim_.count("overlay_send_no_path");
            sim_.record("send_fail", self(), "no_path");
            return false;
        }
        sim_.count("overlay_sends");
        sim_.apply_effects(src_node, std::move(fx));
        return true;
    }

    bool send_direct(const std::string& dst, Bytes body) override {
        auto di = client(dst);
        for (std::size_t c = 0; c < sim_.channels_.size(); ++c) {
            auto& ch = sim_.channels_[c];
            int dir;
            if (ch.ca == idx_ && ch.cb == di) {
                dir = 0;
            } else if (ch.cb == idx_ && ch.ca == di) {
                dir = 1;
            } else {
                continue;
            }
            Transfer tr;
            tr.channel = c;
            tr.dir = dir;
            tr.env = std::make_shared<const Envelope>(Envelope{self(), dst, std::move(body)});
            tr.rto_ms = std::max(sim_.config_.direct.min_rto_ms, 4.0 * ch.spec.latency_ms);
            auto id = sim_.next_transfer_++;
            sim_.transfers_.emplace(id, std::move(tr));
            sim_.direct_attempt(id);
            return true;
        }
        return false;
    }

    std::uint64_t set_timer(double delay_ms, std::uint64_t token) override {
        Event ev;
        ev.kind = EventKind::ClientTimer;
        ev.a = static_cast<std::uint32_t>(idx_);
        ev.x = token;
        ev.y = sim_.next_client_timer_++;
        auto id = ev.y;
        sim_.push(sim_.now_ + std::max(0.0, delay_ms), std::move(ev));
        return id;
    }

    void cancel_timer(std::uint64_t id) override { sim_.cancelled_client_timers_.insert(id); }

    void log(const std::string& event, const std::string& detail) override {
        sim_.count("client." + event);
        sim_.record(event.c_str(), self(), detail);
    }

  private:
    std::size_t client(const std::string& id) const {
        auto it = sim_.client_index_.find(id);
        if (it == sim_.client_index_.end()) throw std::invalid_argument("unknown client '" + id + "'");
        return it->second;
    }

    Simulator& sim_;
    std::size_t idx_;
};

Simulator::Simulator(std::shared_ptr<const Topology> topo, SimConfig config, std::uint64_t seed)
    : topo_(std::move(topo)), config_(config), seed_(seed), truth_(topo_) {
    fault_link_down_.assign(topo_->link_count(), false);
    nodes_.reserve(topo_->node_count());
    for (NodeIndex n = 0; n < topo_->node_count(); ++n) nodes_.emplace_back(n, truth_, config_.node);
    link_dirs_.resize(2 * topo_->link_count());
    for (LinkIndex l = 0; l < topo_->link_count(); ++l) {
        auto [a, b] = topo_->endpoints(l);
        const auto& na = topo_->node(a).str();
        const auto& nb = topo_->node(b).str();
        link_dirs_[2 * l].rng.seed(splitmix64(seed_ + fnv1a(na + ">" + nb)));
        link_dirs_[2 * l + 1].rng.seed(splitmix64(seed_ + fnv1a(nb + ">" + na)));
    }
}

Simulator::~Simulator() = default;

Simulator::LinkDir& Simulator::link_dir(LinkIndex l, NodeIndex from) {
    return link_dirs_[2 * l + (topo_->endpoints(l).first == from ? 0 : 1)];
}

std::uint64_t Simulator::link_frames(LinkIndex l, NodeIndex from) const {
    return link_dirs_.at(2 * l + (topo_->endpoints(l).first == from ? 0 : 1)).frames;
}

std::uint64_t Simulator::link_losses(LinkIndex l, NodeIndex from) const {
    return link_dirs_.at(2 * l + (topo_->endpoints(l).first == from ? 0 : 1)).losses;
}

void Simulator::add_client(const std::string& id, std::shared_ptr<Client> client) {
    auto it = topo_->attachments().find(id);
    if (it == topo_->attachments().end()) throw TopologyError("client '" + id + "' has no attachment");
    add_client(id, topo_->index_of(it->second), std::move(client));
}

void Simulator::add_client(const std::string& id, NodeIndex node, std::shared_ptr<Client> client) {
    if (started_) throw std::logic_error("clients must be added before run()");
    if (node >= topo_->node_count()) throw TopologyError("client attached to unknown node");
    if (client_index_.count(id)) throw std::invalid_argument("duplicate client '" + id + "'");
    client_index_[id] = clients_.size();
    ClientSlot slot;
    slot.id = id;
    slot.node = node;
    slot.client = std::move(client);
    slot.ctx = std::make_unique<Context>(*this, clients_.size());
    clients_.push_back(std::move(slot));
}

void Simulator::add_direct_link(const DirectLinkSpec& spec) {
    auto ia = client_index_.find(spec.a);
    auto ib = client_index_.find(spec.b);
    if (ia == client_index_.end() || ib == client_index_.end())
        throw std::invalid_argument("direct link between unknown clients");
    Channel ch;
    ch.ca = ia->second;
    ch.cb = ib->second;
    ch.spec = spec;
    if (spec.pinned_path) {
        IndexPath p;
        for (const auto& h : *spec.pinned_path) p.hops.push_back(topo_->index_of(h));
        for (std::size_t i = 0; i + 1 < p.hops.size(); ++i) {
            auto l = topo_->link_between(p.hops[i], p.hops[i + 1]);
            if (!l) throw TopologyError("pinned path uses a missing link");
            p.latency_ms += topo_->link(*l).latency_ms;
        }
        ch.pinned = std::move(p);
    }
    ch.rng[0].seed(splitmix64(seed_ + fnv1a("direct:" + spec.a + ">" + spec.b)));
    ch.rng[1].seed(splitmix64(seed_ + fnv1a("direct:" + spec.b + ">" + spec.a)));
    channels_.push_back(std::move(ch));
}

void Simulator::set_underlay(AsUnderlay underlay) {
    underlay_ = std::move(underlay);
    refresh_underlay_links();
    for (NodeIndex n = 0; n < nodes_.size(); ++n) apply_effects(n, nodes_[n].recompute_routes(now_, truth_));
}

void Simulator::schedule(const FaultSchedule& schedule) {
    schedule.validate(*topo_);
    for (const auto& e : schedule.entries) {
        Event ev;
        ev.kind = EventKind::Fault;
        ev.x = schedule_.size();
        schedule_.push_back(e);
        push(e.time_ms, std::move(ev));
    }
}

void Simulator::set_behavior(const NodeId& node, overlay::Behavior b) {
    nodes_[topo_->index_of(node)].set_behavior(b);
}

void Simulator::schedule_send(double at, NodeIndex src, NodeIndex dst, overlay::Payload payload,
                              overlay::ServiceClass service, overlay::SendOptions options) {
    Event ev;
    ev.kind = EventKind::NodeSend;
    ev.x = pending_sends_.size();
    pending_sends_.push_back({src, dst, std::move(payload), service, options});
    push(at, std::move(ev));
}

bool Simulator::channel_usable(const Channel& ch) const {
    if (ch.pinned && !truth_.path_usable(*ch.pinned)) return false;
    if (ch.spec.as_pair && underlay_ && !underlay_->reachable(ch.spec.as_pair->first, ch.spec.as_pair->second))
        return false;
    return true;
}

bool Simulator::direct_usable(const std::string& a, const std::string& b) const {
    auto ia = client_index_.find(a);
    auto ib = client_index_.find(b);
    if (ia == client_index_.end() || ib == client_index_.end()) return false;
    for (const auto& ch : channels_) {
        bool match = (ch.ca == ia->second && ch.cb == ib->second) || (ch.ca == ib->second && ch.cb == ia->second);
        if (match) return channel_usable(ch);
    }
    return false;
}

namespace {
template <class K>
bool later(const K& x, const K& y) {
    return x.t != y.t ? x.t > y.t : x.order > y.order;
}
}  // namespace

void Simulator::push(double t, Event ev) {
    ev.t = t;
    ev.order = order_++;
    std::uint32_t slot;
    if (free_slots_.empty()) {
        slot = static_cast<std::uint32_t>(slab_.size());
        slab_.push_back(std::move(ev));
    } else {
        slot = free_slots_.back();
        free_slots_.pop_back();
        slab_[slot] = std::move(ev);
    }
    heap_.push_back({t, order_ - 1, slot});
    std::push_heap(heap_.begin(), heap_.end(), later<HeapKey>);
}

void Simulator::record(const char* event, NodeIndex node, std::string detail) {
    if (!config_.record_trace) return;
    trace_.rows.push_back({now_, event, topo_->node(node).str(), std::move(detail)});
}

void Simulator::record(const char* event, const std::string& who, std::string detail) {
    if (!config_.record_trace) return;
    trace_.rows.push_back({now_, event, who, std::move(detail)});
}

Trace Simulator::run(double horizon_ms) {
    if (!(horizon_ms > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!started_) {
        started_ = true;
        for (std::size_t c = 0; c < clients_.size(); ++c) {
            Event ev;
            ev.kind = EventKind::ClientStart;
            ev.a = static_cast<std::uint32_t>(c);
            push(0.0, std::move(ev));
        }
    }
    while (!heap_.empty() && heap_.front().t <= horizon_ms) {
        std::pop_heap(heap_.begin(), heap_.end(), later<HeapKey>);
        const std::uint32_t slot = heap_.back().slot;
        heap_.pop_back();
        Event ev = std::move(slab_[slot]);
        free_slots_.push_back(slot);
        now_ = ev.t;
        if (++trace_.events > config_.event_cap)
            throw EventCapExceeded("event cap of " + std::to_string(config_.event_cap) + " exceeded");
        dispatch_event(ev);
    }
    trace_.end_time_ms = now_;
    return trace_;
}

void Simulator::dispatch_event(Event& ev) {
    switch (ev.kind) {
        case EventKind::Arrival: {
            NodeIndex to = ev.a;
            NodeIndex from = ev.b;
            auto l = static_cast<LinkIndex>(ev.x);
            if (!truth_.usable(l)) {
                count("lost_in_flight");
                record("lost", from, std::string("in_flight to=") + topo_->node(to).str());
                return;
            }
            count("rx");
            if (arrival_observer_) arrival_observer_(now_, from, to, *ev.frame, encoded_size(*topo_, *ev.frame));
            apply_effects(to, nodes_[to].handle_frame(now_, from, ev.frame));
            return;
        }
        case EventKind::LinkIdle:
            apply_effects(ev.a, nodes_[ev.a].on_link_idle(now_, ev.b));
            return;
        case EventKind::NodeTimer:
            apply_effects(ev.a, nodes_[ev.a].handle_timer(now_, ev.x));
            return;
        case EventKind::ViewUpdate:
            apply_effects(ev.a, nodes_[ev.a].recompute_routes(now_, *snapshots_[ev.x]));
            return;
        case EventKind::Fault:
            apply_change(schedule_[ev.x].change);
            return;
        case EventKind::NodeSend: {
            auto& s = pending_sends_[ev.x];
            overlay::Effects fx;
            try {
                fx = nodes_[s.src].client_send(now_, s.dst, std::move(s.payload), s.service, s.options);
            } catch (const NoPathError&) {
                count("overlay_send_no_path");
                return;
            }
            count("overlay_sends");
            apply_effects(s.src, std::move(fx));
            return;
        }
        case EventKind::ClientStart: {
            auto& c = clients_[ev.a];
            c.client->on_start(*c.ctx);
            return;
        }
        case EventKind::ClientTimer: {
            if (cancelled_client_timers_.erase(ev.y)) return;
            auto& c = clients_[ev.a];
            c.client->on_timer(*c.ctx, ev.x);
            return;
        }
        case EventKind::ClientMessage:
            client_message(ev.a, *ev.env);
            return;
        case EventKind::ClientFailed: {
            auto& c = clients_[ev.a];
            count("direct_failed");
            record("direct_failed", c.id, "dst=" + ev.env->dst);
            c.client->on_send_failed(*c.ctx, *ev.env);
            return;
        }
        case EventKind::DirectAttempt:
            direct_attempt(ev.x);
            return;
    }
}

void Simulator::client_message(std::size_t client, const Envelope& env) {
    auto& c = clients_[client];
    c.client->on_message(*c.ctx, env);
}

void Simulator::direct_attempt(std::uint64_t id) {
    auto it = transfers_.find(id);
    if (it == transfers_.end()) return;
    Transfer& tr = it->second;
    Channel& ch = channels_[tr.channel];
    const int dir = tr.dir;
    const std::size_t bytes = 3 + tr.env->src.size() + tr.env->dst.size() + tr.env->body.size();
    const double ser = static_cast<double>(bytes) * 8.0 / (ch.spec.bw_mbps * 1000.0);
    const double depart = std::max(now_, ch.busy_until[dir]);
    ch.busy_until[dir] = depart + ser;
    count("direct_tx");
    bool ok = channel_usable(ch);
    if (ok && ch.spec.loss > 0.0 && unit_draw(ch.rng[dir]) < ch.spec.loss) ok = false;
    if (ok) {
        Event ev;
        ev.kind = EventKind::ClientMessage;
        ev.a = static_cast<std::uint32_t>(dir == 0 ? ch.cb : ch.ca);
        ev.env = tr.env;
        push(depart + ser + ch.spec.latency_ms, std::move(ev));
        transfers_.erase(it);
        return;
    }
    count("direct_lost");
    record("direct_lost", tr.env->src, "dst=" + tr.env->dst + " attempt=" + std::to_string(tr.attempt));
    if (++tr.attempt > config_.direct.max_retries) {
        Event ev;
        ev.kind = EventKind::ClientFailed;
        ev.a = static_cast<std::uint32_t>(dir == 0 ? ch.ca : ch.cb);
        ev.env = tr.env;
        push(now_, std::move(ev));
        transfers_.erase(it);
        return;
    }
    Event ev;
    ev.kind = EventKind::DirectAttempt;
    ev.x = id;
    push(now_ + tr.rto_ms, std::move(ev));
    tr.rto_ms = std::min(2.0 * tr.rto_ms, config_.direct.max_rto_ms);
}

void Simulator::apply_effects(NodeIndex n, overlay::Effects&& fx) {
    for (auto& e : fx) {
        if (auto* t = std::get_if<overlay::LinkTransmit>(&e)) {
            transmit(n, t->neighbor, std::move(t->frame));
        } else if (auto* d = std::get_if<overlay::Deliver>(&e)) {
            count("delivered");
            if (config_.record_trace)
                record("deliver", n,
                       "src=" + topo_->node(d->src).str() + " seq=" + std::to_string(d->seq) + " svc=" +
                           overlay::to_string(d->service.kind) + " k=" + std::to_string(d->service.k));
            if (deliver_observer_) deliver_observer_(now_, n, *d);
            deliver_to_client(n, *d);
        } else if (auto* s = std::get_if<overlay::SetTimer>(&e)) {
            Event ev;
            ev.kind = EventKind::NodeTimer;
            ev.a = n;
            ev.x = s->id;
            push(now_ + s->delay_ms, std::move(ev));
        } else if (auto* dr = std::get_if<overlay::Drop>(&e)) {
            count(std::string("drop.") + overlay::to_string(dr->reason));
            if (config_.record_trace)
                record("drop", n,
                       std::string(overlay::to_string(dr->reason)) + " src=" + topo_->node(dr->src).str() +
                           " dst=" + topo_->node(dr->dst).str() + " seq=" + std::to_string(dr->seq));
        }
        // CancelTimer: the node ignores timers it no longer tracks.
    }
}

void Simulator::deliver_to_client(NodeIndex node, const overlay::Deliver& d) {
    if (!d.payload) return;
    auto env = decode_envelope(*d.payload);
    if (!env) {
        count("deliver_raw");
        return;
    }
    auto it = client_index_.find(env->dst);
    if (it == client_index_.end() || clients_[it->second].node != node) {
        count("deliver_no_client");
        return;
    }
    Event ev;
    ev.kind = EventKind::ClientMessage;
    ev.a = static_cast<std::uint32_t>(it->second);
    ev.env = std::make_shared<const Envelope>(std::move(*env));
    push(now_, std::move(ev));
}

void Simulator::transmit(NodeIndex from, NodeIndex to, overlay::FramePtr frame) {
    auto l = topo_->link_between(from, to);
    if (!l) {
        count("tx_invalid");
        return;
    }
    const auto& spec = topo_->link(*l);
    const std::size_t size = encoded_size(*topo_, *frame);
    const double ser = static_cast<double>(size) * 8.0 / (spec.bw_mbps * 1000.0);

    Event idle;
    idle.kind = EventKind::LinkIdle;
    idle.a = from;
    idle.b = to;
    push(now_ + ser, std::move(idle));

    auto& d = link_dir(*l, from);
    ++d.frames;
    count("tx");
    count("tx_bytes", size);
    const double p = truth_.loss(*l);
    const bool lost = p > 0.0 && unit_draw(d.rng) < p;
    if (config_.record_trace)
        record("tx", from,
               std::string("to=") + topo_->node(to).str() + " kind=" + frame_kind_name(frame->kind) +
                   " bytes=" + std::to_string(size));
    if (!truth_.usable(*l)) {
        count("tx_link_down");
        record("lost", from, "link_down to=" + topo_->node(to).str());
        return;
    }
    if (lost) {
        ++d.losses;
        count("lost");
        record("lost", from, "loss to=" + topo_->node(to).str());
        return;
    }
    Event ev;
    ev.kind = EventKind::Arrival;
    ev.a = to;
    ev.b = from;
    ev.x = *l;
    ev.frame = std::move(frame);
    push(now_ + ser + spec.latency_ms, std::move(ev));
}

void Simulator::refresh_underlay_links() {
    for (LinkIndex l = 0; l < topo_->link_count(); ++l) {
        bool ok = !underlay_ || underlay_->overlay_link_usable(*topo_, l);
        truth_.set_link_up(l, ok && !fault_link_down_[l]);
    }
}

void Simulator::publish_view() {
    snapshots_.push_back(std::make_shared<const TopologyView>(truth_));
    for (NodeIndex n = 0; n < nodes_.size(); ++n) {
        Event ev;
        ev.kind = EventKind::ViewUpdate;
        ev.a = n;
        ev.x = snapshots_.size() - 1;
        push(now_ + config_.view_delay_ms, std::move(ev));
    }
}

void Simulator::apply_change(const ScheduleChange& change) {
    count("faults");
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, NodeChange>) {
                auto n = topo_->index_of(c.node);
                truth_.set_node_up(n, c.up);
                record("fault", n, c.up ? "node_up" : "node_down");
            } else if constexpr (std::is_same_v<T, LinkChange>) {
                auto l = *topo_->link_between(c.a, c.b);
                fault_link_down_[l] = !c.up;
                refresh_underlay_links();
                record("fault", topo_->index_of(c.a), (c.up ? "link_up " : "link_down ") + c.b.str());
            } else if constexpr (std::is_same_v<T, LossChange>) {
                truth_ = apply_fault(std::move(truth_), c);
                record("fault", topo_->index_of(c.a), "loss " + c.b.str() + " " + fmt_double(c.loss));
            } else if constexpr (std::is_same_v<T, BehaviorChange>) {
                auto n = topo_->index_of(c.node);
                nodes_[n].set_behavior(c.behavior);
                record("fault", n, "behavior");
                return;
            } else if constexpr (std::is_same_v<T, HijackChange>) {
                if (!underlay_) throw std::logic_error("hijack scheduled without an AS underlay");
                underlay_ = apply_hijack(std::move(*underlay_), c.hijack);
                refresh_underlay_links();
                record("fault", std::string("-"),
                       "hijack " + std::to_string(c.hijack.a) + "-" + std::to_string(c.hijack.b));
            }
            publish_view();
        },
        change);
}

}  // namespace spon::netsim
