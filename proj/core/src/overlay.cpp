#include "spon/overlay.hpp"

#include <algorithm>
#include <cmath>

namespace spon::overlay {

const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::Duplicate: return "duplicate";
        case DropReason::Malformed: return "malformed";
        case DropReason::Expired: return "expired";
        case DropReason::BufferFull: return "buffer_full";
        case DropReason::NoRoute: return "no_route";
        case DropReason::Unrecoverable: return "unrecoverable";
        case DropReason::Adversary: return "adversary";
        case DropReason::GaveUp: return "gave_up";
        case DropReason::LinkDown: return "link_down";
    }
    return "unknown";
}

bool SeqWindow::observe(std::uint64_t seq, std::uint32_t attempt) {
    if (seq < base_) return false;
    std::uint64_t end = base_ + marks_.size();
    if (seq >= end + width_) {
        // Jump: everything currently tracked falls out of the window.
        marks_.clear();
        base_ = seq + 1 - width_;
        end = base_;
    }
    while (seq >= base_ + marks_.size()) marks_.push_back(0);
    while (marks_.size() > width_) {
        marks_.pop_front();
        ++base_;
    }
    auto& m = marks_[seq - base_];
    if (m != 0 && attempt + 1 <= m) return false;
    m = attempt + 1;
    return true;
}

NodeState::NodeState(NodeIndex self, TopologyView view, NodeConfig config)
    : self_(self), view_(std::move(view)), config_(config) {
    const auto n = view_.base().node_count();
    if (self_ >= n) throw TopologyError("node index out of range");
    out_.resize(n);
    in_.resize(n);
}

NodeState::OutLink& NodeState::out(NodeIndex n) {
    auto& slot = out_[n];
    if (!slot) slot.emplace(config_.buffer_capacity);
    return *slot;
}

NodeState::InLink& NodeState::in(NodeIndex n) {
    auto& slot = in_[n];
    if (!slot) slot.emplace();
    return *slot;
}

TimerId NodeState::arm(Effects& fx, double delay_ms, TimerInfo info) {
    TimerId id = next_timer_++;
    timers_.emplace(id, std::move(info));
    fx.push_back(SetTimer{id, delay_ms});
    return id;
}

void NodeState::drop(Effects& fx, DropReason r, const Frame* f) {
    ++stats_.drops[r];
    if (f) {
        fx.push_back(Drop{r, f->src, f->dst, f->seq});
    } else {
        fx.push_back(Drop{r});
    }
}

double NodeState::link_latency(NodeIndex neighbor) const {
    auto l = view_.base().link_between(self_, neighbor);
    return l ? view_.base().link(*l).latency_ms : 0.0;
}

double NodeState::best_latency(NodeIndex dst) {
    auto p = try_shortest_path(view_, self_, dst);
    if (!p) throw NoPathError("no path " + view_.base().node(self_).str() + " -> " + view_.base().node(dst).str());
    return p->latency_ms;
}

const std::vector<IndexPath>& NodeState::routes(NodeIndex dst, unsigned k) {
    k = std::min<unsigned>(k, static_cast<unsigned>(view_.base().node_count()));
    auto key = std::pair{dst, k};
    auto it = route_cache_.find(key);
    if (it != route_cache_.end()) return it->second;
    auto paths = k_disjoint_paths(view_, self_, dst, k);
    return route_cache_.emplace(key, std::move(paths)).first->second;
}

std::size_t NodeState::queued(NodeIndex neighbor) const {
    const auto& o = out_.at(neighbor);
    return o ? o->sched.size() + o->control.size() : 0;
}

std::size_t NodeState::queued_from(NodeIndex neighbor, const BufferKey& key) const {
    const auto& o = out_.at(neighbor);
    return o ? o->sched.size_of(key) : 0;
}

std::size_t NodeState::dedup_window_length(NodeIndex src, NodeIndex dst, ServiceKind kind) const {
    auto it = relay_windows_.find({src, dst, kind, FrameKind::Data});
    return it == relay_windows_.end() ? 0 : it->second.length();
}

bool NodeState::link_busy(NodeIndex neighbor) const {
    const auto& o = out_.at(neighbor);
    return o && o->busy;
}

// ---------------------------------------------------------------------------
// Sending

Effects NodeState::client_send(TimeMs now, NodeIndex dst, Payload payload, ServiceClass service,
                               SendOptions options) {
    const auto n = view_.base().node_count();
    if (dst >= n) throw TopologyError("unknown destination index");
    const std::size_t size = payload ? payload->size() : 0;
    if (size > config_.max_payload)
        throw PayloadTooLarge("payload of " + std::to_string(size) + " bytes exceeds " +
                              std::to_string(config_.max_payload));
    if (service.k > n) service.k = static_cast<std::uint8_t>(n);

    Effects fx;
    auto& counter = next_seq_[{dst, service.kind}];
    if (dst == self_) {
        ++counter;
        ++stats_.delivered;
        fx.push_back(Deliver{self_, counter, service, std::move(payload)});
        return fx;
    }

    Frame f;
    f.kind = FrameKind::Data;
    f.service = service;
    f.src = self_;
    f.dst = dst;
    f.priority = options.priority;
    f.payload = std::move(payload);
    double best = best_latency(dst);  // NoPath when the destination is unreachable
    if (service.kind == ServiceKind::Priority) {
        f.deadline_ms = options.deadline_ms ? *options.deadline_ms
                                            : now + config_.deadline_factor * std::max(best, 0.001);
    }
    f.seq = counter + 1;
    auto msg = std::make_shared<const Frame>(std::move(f));
    dispatch(now, msg, fx, /*throw_on_no_path=*/true);
    ++counter;
    ++stats_.originated;

    if (service.kind == ServiceKind::Reliable) {
        RelPending p;
        p.frame = msg;
        p.rto_ms = std::max(config_.min_rto_ms, 2.0 * (2.0 * best));
        p.timer = arm(fx, p.rto_ms, {TimerKind::RelRetransmit, dst, msg->seq, nullptr});
        rel_pending_.emplace(std::pair{dst, msg->seq}, std::move(p));
    }
    return fx;
}

void NodeState::dispatch(TimeMs now, const FramePtr& msg, Effects& fx, bool throw_on_no_path) {
    if (msg->flooded()) {
        std::vector<NodeIndex> targets;
        for (const auto& adj : view_.base().neighbors(self_))
            if (view_.usable(adj.link)) targets.push_back(adj.neighbor);
        if (targets.empty()) {
            if (throw_on_no_path) throw NoPathError("no up neighbor at " + view_.base().node(self_).str());
            drop(fx, DropReason::NoRoute, msg.get());
            return;
        }
        StreamKey key{msg->src, msg->dst, msg->service.kind, msg->kind};
        relay_windows_.try_emplace(key, config_.dedup_window).first->second.observe(msg->seq, msg->attempt);
        for (auto t : targets) enqueue_to(now, t, msg, fx);
        return;
    }
    const std::vector<IndexPath>* paths = nullptr;
    try {
        paths = &routes(msg->dst, msg->service.k);
    } catch (const NoPathError&) {
        if (throw_on_no_path) throw;
        drop(fx, DropReason::NoRoute, msg.get());
        return;
    }
    for (const auto& p : *paths) {
        auto copy = std::make_shared<Frame>(*msg);
        copy->routes = {p.hops};
        enqueue_to(now, p.hops[1], copy, fx);
    }
}

void NodeState::enqueue_to(TimeMs now, NodeIndex neighbor, const FramePtr& msg, Effects& fx) {
    auto& o = out(neighbor);
    if (!o.sched.enqueue(BufferKey::for_message(*msg), msg->priority, msg)) {
        drop(fx, DropReason::BufferFull, msg.get());
        return;
    }
    try_transmit(now, neighbor, fx);
}

void NodeState::send_control(TimeMs now, NodeIndex neighbor, FramePtr frame, Effects& fx) {
    out(neighbor).control.push_back(std::move(frame));
    try_transmit(now, neighbor, fx);
}

void NodeState::try_transmit(TimeMs now, NodeIndex neighbor, Effects& fx) {
    auto& o = out(neighbor);
    if (o.busy) return;
    if (!o.control.empty()) {
        FramePtr f = std::move(o.control.front());
        o.control.pop_front();
        if (f->kind == FrameKind::HopData) o.unprobed = true;
        o.busy = true;
        fx.push_back(LinkTransmit{neighbor, std::move(f)});
        return;
    }
    auto next = o.sched.dequeue(
        [now](const FramePtr& m) {
            return m->service.kind == ServiceKind::Priority && m->deadline_ms < now;
        },
        [&](FramePtr&& m) { drop(fx, DropReason::Expired, m.get()); });
    if (!next) {
        if (config_.hop_recovery && o.unprobed && !o.probe_armed) {
            o.probe_armed = true;
            arm(fx, config_.probe_delay_ms, {TimerKind::Probe, neighbor, 0, nullptr});
        }
        return;
    }
    FramePtr wire = std::move(*next);
    if (config_.hop_recovery) {
        auto hop = std::make_shared<Frame>();
        hop->kind = FrameKind::HopData;
        hop->service = wire->service;
        hop->src = self_;
        hop->dst = neighbor;
        hop->seq = o.next_seq++;
        hop->priority = wire->priority;
        hop->inner = std::move(wire);
        o.cache.push_back({hop->seq, hop, now});
        while (o.cache.size() > config_.cache_capacity) o.cache.pop_front();
        if (!o.cache_timer_armed) {
            o.cache_timer_armed = true;
            arm(fx, config_.cache_expiry_ms, {TimerKind::CacheExpiry, neighbor, 0, nullptr});
        }
        o.unprobed = true;
        wire = std::move(hop);
    }
    o.busy = true;
    fx.push_back(LinkTransmit{neighbor, std::move(wire)});
}

Effects NodeState::on_link_idle(TimeMs now, NodeIndex neighbor) {
    Effects fx;
    out(neighbor).busy = false;
    try_transmit(now, neighbor, fx);
    return fx;
}

// ---------------------------------------------------------------------------
// Receiving

Effects NodeState::handle_raw_frame(TimeMs now, NodeIndex from, std::span<const std::uint8_t> bytes) {
    Frame f;
    try {
        f = decode_frame(view_.base(), bytes);
    } catch (const MalformedFrame&) {
        Effects fx;
        drop(fx, DropReason::Malformed);
        return fx;
    }
    return handle_frame(now, from, std::make_shared<const Frame>(std::move(f)));
}

void NodeState::mark_missing(NodeIndex from, std::uint64_t upto, Effects& fx) {
    // Everything in (highest, upto) not yet seen becomes missing; highest := upto.
    auto& il = in(from);
    std::uint64_t first = il.highest + 1;
    if (upto > config_.cache_capacity && first < upto - config_.cache_capacity)
        first = upto - config_.cache_capacity;
    bool gap = false;
    for (std::uint64_t s = first; s < upto; ++s) {
        il.missing.emplace(s, 0);
        gap = true;
    }
    il.highest = upto;
    if (gap && !il.nack_armed) {
        il.nack_armed = true;
        arm(fx, config_.nack_delay_ms, {TimerKind::HopNack, from, 0, nullptr});
    }
}

bool NodeState::note_link_seq(NodeIndex from, std::uint64_t seq, Effects& fx) {
    auto& il = in(from);
    if (seq > il.highest) {
        mark_missing(from, seq, fx);
        return true;
    }
    return il.missing.erase(seq) > 0;
}

Effects NodeState::handle_frame(TimeMs now, NodeIndex from, const FramePtr& frame) {
    Effects fx;
    if (!frame || from >= view_.base().node_count() || !view_.base().link_between(self_, from)) {
        drop(fx, DropReason::Malformed, frame.get());
        return fx;
    }
    if (behavior_.kind == BehaviorKind::DropAll) {
        drop(fx, DropReason::Adversary, frame.get());
        return fx;
    }
    switch (frame->kind) {
        case FrameKind::HopData: {
            if (!frame->inner) {
                drop(fx, DropReason::Malformed, frame.get());
                return fx;
            }
            if (!note_link_seq(from, frame->seq, fx)) {
                drop(fx, DropReason::Duplicate, frame->inner.get());
                return fx;
            }
            process_message(now, from, frame->inner, fx, false);
            return fx;
        }
        case FrameKind::HopNack: {
            if (frame->missing.empty()) {
                // Upstream probe: anything up to frame->seq we have not seen is missing.
                auto& il = in(from);
                if (frame->seq > il.highest) {
                    mark_missing(from, frame->seq, fx);
                    il.missing.emplace(frame->seq, 0);
                    if (!il.nack_armed) {
                        il.nack_armed = true;
                        arm(fx, config_.nack_delay_ms, {TimerKind::HopNack, from, 0, nullptr});
                    }
                }
                return fx;
            }
            auto& o = out(from);
            for (auto s : frame->missing) {
                const CacheEntry* hit = nullptr;
                if (!o.cache.empty() && s >= o.cache.front().seq) {
                    auto idx = s - o.cache.front().seq;
                    if (idx < o.cache.size() && o.cache[idx].seq == s &&
                        o.cache[idx].sent + config_.cache_expiry_ms > now)
                        hit = &o.cache[idx];
                }
                if (hit) {
                    ++stats_.hop_retransmits;
                    o.control.push_back(hit->frame);
                } else {
                    ++stats_.drops[DropReason::Unrecoverable];
                    fx.push_back(Drop{DropReason::Unrecoverable, self_, from, s});
                }
            }
            try_transmit(now, from, fx);
            return fx;
        }
        case FrameKind::Data:
        case FrameKind::Ack:
            process_message(now, from, frame, fx, false);
            return fx;
        case FrameKind::Nack:
            drop(fx, DropReason::Malformed, frame.get());
            return fx;
    }
    return fx;
}

void NodeState::process_message(TimeMs now, NodeIndex from, const FramePtr& msg, Effects& fx, bool honest_only) {
    if (!honest_only) {
        switch (behavior_.kind) {
            case BehaviorKind::DropAll:
                drop(fx, DropReason::Adversary, msg.get());
                return;
            case BehaviorKind::DropFlow:
                if (msg->src == behavior_.flow_src && msg->dst == behavior_.flow_dst) {
                    drop(fx, DropReason::Adversary, msg.get());
                    return;
                }
                break;
            case BehaviorKind::Delay:
                arm(fx, behavior_.delay_ms, {TimerKind::Deferred, from, 0, msg});
                return;
            case BehaviorKind::Honest:
                break;
        }
    }
    const auto n = view_.base().node_count();
    if (msg->src >= n || msg->dst >= n || (msg->kind != FrameKind::Data && msg->kind != FrameKind::Ack)) {
        drop(fx, DropReason::Malformed, msg.get());
        return;
    }

    if (msg->flooded()) {
        StreamKey key{msg->src, msg->dst, msg->service.kind, msg->kind};
        auto& win = relay_windows_.try_emplace(key, config_.dedup_window).first->second;
        std::uint32_t attempt = msg->service.kind == ServiceKind::Reliable ? msg->attempt : 0;
        if (!win.observe(msg->seq, attempt)) {
            drop(fx, DropReason::Duplicate, msg.get());
            return;
        }
        if (msg->dst == self_) {
            arrive_at_destination(now, msg, fx);
            return;
        }
        ++stats_.forwarded;
        for (const auto& adj : view_.base().neighbors(self_)) {
            if (adj.neighbor == from || !view_.usable(adj.link)) continue;
            enqueue_to(now, adj.neighbor, msg, fx);
        }
        return;
    }

    if (msg->routes.empty()) {
        drop(fx, DropReason::Malformed, msg.get());
        return;
    }
    const auto& route = msg->routes.front();
    auto pos = std::find(route.begin(), route.end(), self_);
    if (pos == route.end() || route.back() != msg->dst) {
        drop(fx, DropReason::Malformed, msg.get());
        return;
    }
    if (msg->dst == self_) {
        arrive_at_destination(now, msg, fx);
        return;
    }
    NodeIndex next = *(pos + 1);
    auto link = view_.base().link_between(self_, next);
    ++stats_.forwarded;
    if (link && view_.usable(*link)) {
        enqueue_to(now, next, msg, fx);
    } else {
        reroute(now, msg, fx);
    }
}

void NodeState::arrive_at_destination(TimeMs now, const FramePtr& msg, Effects& fx) {
    if (msg->kind == FrameKind::Ack) {
        auto it = rel_pending_.find({msg->src, msg->seq});
        if (it != rel_pending_.end()) {
            timers_.erase(it->second.timer);
            fx.push_back(CancelTimer{it->second.timer});
            rel_pending_.erase(it);
        } else {
            drop(fx, DropReason::Duplicate, msg.get());
        }
        return;
    }
    StreamKey key{msg->src, msg->dst, msg->service.kind, FrameKind::Data};
    auto& win = delivery_windows_.try_emplace(key, config_.dedup_window).first->second;
    if (win.observe(msg->seq)) {
        ++stats_.delivered;
        fx.push_back(Deliver{msg->src, msg->seq, msg->service, msg->payload});
    } else {
        drop(fx, DropReason::Duplicate, msg.get());
    }
    if (msg->service.kind == ServiceKind::Reliable) {
        auto ack = std::make_shared<Frame>();
        ack->kind = FrameKind::Ack;
        ack->service = msg->service;
        ack->src = self_;
        ack->dst = msg->src;
        ack->seq = msg->seq;
        ack->priority = msg->priority;
        ack->attempt = msg->attempt;
        dispatch(now, ack, fx, /*throw_on_no_path=*/false);
    }
}

void NodeState::reroute(TimeMs now, const FramePtr& msg, Effects& fx) {
    auto p = try_shortest_path(view_, self_, msg->dst);
    if (p && p->hops.size() >= 2) {
        auto copy = std::make_shared<Frame>(*msg);
        copy->routes = {p->hops};
        enqueue_to(now, p->hops[1], copy, fx);
        return;
    }
    if (msg->service.kind == ServiceKind::Reliable) {
        parked_.push_back(msg);
    } else {
        drop(fx, DropReason::NoRoute, msg.get());
    }
}

// ---------------------------------------------------------------------------
// Timers

Effects NodeState::handle_timer(TimeMs now, TimerId id) {
    Effects fx;
    auto it = timers_.find(id);
    if (it == timers_.end()) return fx;
    TimerInfo info = std::move(it->second);
    timers_.erase(it);

    switch (info.kind) {
        case TimerKind::RelRetransmit: {
            auto pit = rel_pending_.find({info.node, info.seq});
            if (pit == rel_pending_.end()) break;
            auto& p = pit->second;
            if (++p.retries > config_.rel_max_retries) {
                drop(fx, DropReason::GaveUp, p.frame.get());
                rel_pending_.erase(pit);
                break;
            }
            ++stats_.rel_retransmits;
            auto copy = std::make_shared<Frame>(*p.frame);
            copy->attempt = p.retries;
            p.frame = copy;
            dispatch(now, p.frame, fx, /*throw_on_no_path=*/false);
            p.rto_ms *= 2.0;
            p.timer = arm(fx, p.rto_ms, {TimerKind::RelRetransmit, info.node, info.seq, nullptr});
            break;
        }
        case TimerKind::HopNack: {
            auto& il = in(info.node);
            il.nack_armed = false;
            std::vector<std::uint64_t> ask;
            for (auto m = il.missing.begin(); m != il.missing.end();) {
                if (m->second >= config_.nack_retries) {
                    m = il.missing.erase(m);
                    continue;
                }
                ++m->second;
                ask.push_back(m->first);
                ++m;
            }
            if (!ask.empty()) {
                auto nack = std::make_shared<Frame>();
                nack->kind = FrameKind::HopNack;
                nack->src = self_;
                nack->dst = info.node;
                nack->seq = ask.front();
                nack->missing = std::move(ask);
                ++stats_.nacks_sent;
                send_control(now, info.node, std::move(nack), fx);
            }
            if (!il.missing.empty()) {
                il.nack_armed = true;
                arm(fx, 2.0 * link_latency(info.node) + 2.0 * config_.nack_delay_ms,
                    {TimerKind::HopNack, info.node, 0, nullptr});
            }
            break;
        }
        case TimerKind::Probe: {
            auto& o = out(info.node);
            o.probe_armed = false;
            if (o.busy || !o.control.empty() || !o.sched.empty() || !o.unprobed) break;
            auto l = view_.base().link_between(self_, info.node);
            if (!l || !view_.usable(*l)) break;
            o.unprobed = false;
            auto probe = std::make_shared<Frame>();
            probe->kind = FrameKind::HopNack;
            probe->src = self_;
            probe->dst = info.node;
            probe->seq = o.next_seq - 1;
            ++stats_.probes_sent;
            o.busy = true;
            fx.push_back(LinkTransmit{info.node, std::move(probe)});
            break;
        }
        case TimerKind::CacheExpiry: {
            auto& o = out(info.node);
            o.cache_timer_armed = false;
            while (!o.cache.empty() && o.cache.front().sent + config_.cache_expiry_ms <= now) o.cache.pop_front();
            if (!o.cache.empty()) {
                o.cache_timer_armed = true;
                arm(fx, o.cache.front().sent + config_.cache_expiry_ms - now,
                    {TimerKind::CacheExpiry, info.node, 0, nullptr});
            }
            break;
        }
        case TimerKind::Deferred:
            process_message(now, info.node, info.frame, fx, /*honest_only=*/true);
            break;
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Topology changes

bool NodeState::remaining_route_usable(const Frame& msg) const {
    if (msg.routes.empty()) return true;
    const auto& r = msg.routes.front();
    auto pos = std::find(r.begin(), r.end(), self_);
    if (pos == r.end()) return false;
    for (auto it = pos; it != r.end(); ++it) {
        if (!view_.node_up(*it)) return false;
        if (it + 1 != r.end()) {
            auto l = view_.base().link_between(*it, *(it + 1));
            if (!l || !view_.link_up(*l)) return false;
        }
    }
    return true;
}

Effects NodeState::recompute_routes(TimeMs now, TopologyView new_view) {
    Effects fx;
    if (new_view == view_) return fx;
    view_ = std::move(new_view);

    std::vector<std::pair<NodeIndex, unsigned>> keys;
    for (const auto& [key, paths] : route_cache_) keys.push_back(key);
    route_cache_.clear();
    for (const auto& [dst, k] : keys) {
        try {
            routes(dst, k);
        } catch (const NoPathError&) {
        }
    }

    std::vector<FramePtr> restamp;
    for (NodeIndex nb = 0; nb < out_.size(); ++nb) {
        if (!out_[nb]) continue;
        auto& o = *out_[nb];
        auto l = view_.base().link_between(self_, nb);
        bool up = l && view_.usable(*l);
        if (!up) {
            o.control.clear();
            for (auto& m : o.sched.extract_if([](const FramePtr&) { return true; })) {
                if (m->flooded()) {
                    drop(fx, DropReason::LinkDown, m.get());
                } else {
                    restamp.push_back(std::move(m));
                }
            }
        } else {
            for (auto& m : o.sched.extract_if([this](const FramePtr& m) {
                     return !m->flooded() && !remaining_route_usable(*m);
                 }))
                restamp.push_back(std::move(m));
        }
    }
    auto parked = std::move(parked_);
    parked_.clear();
    for (auto& m : parked) restamp.push_back(std::move(m));
    for (auto& m : restamp) reroute(now, m, fx);
    return fx;
}

}  // namespace spon::overlay
