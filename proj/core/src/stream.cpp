#include <cmath>
#include <limits>

#include "spon/payment.hpp"

namespace spon::payment {

namespace {

constexpr std::uint64_t kStartToken = 1ULL << 62;
constexpr std::uint64_t kPingTimeout = 1ULL << 62;

}  // namespace

const char* to_string(StreamState s) {
    switch (s) {
        case StreamState::Pending: return "PENDING";
        case StreamState::Running: return "RUNNING";
        case StreamState::Complete: return "COMPLETE";
        case StreamState::Failed: return "FAILED";
    }
    return "?";
}

std::vector<Amount> split_payment(Amount total, Amount packet_amount) {
    if (total <= 0) throw std::invalid_argument("payment total must be positive");
    if (packet_amount <= 0) throw std::invalid_argument("packet amount must be positive");
    std::vector<Amount> out;
    out.reserve(static_cast<std::size_t>((total + packet_amount - 1) / packet_amount));
    for (Amount left = total; left > 0; left -= packet_amount) out.push_back(std::min(left, packet_amount));
    return out;
}

// ---------------------------------------------------------------------------
// StreamSender

StreamSender::StreamSender(StreamConfig config, std::vector<PaymentSpec> payments)
    : config_(std::move(config)), srtt_(config_.initial_rtt_ms) {
    if (config_.window < 1) throw std::invalid_argument("stream window must be >= 1");
    for (auto& spec : payments) {
        split_payment(spec.total, spec.packet_amount);  // validates
        PaymentResult r;
        r.spec = spec;
        results_.push_back(std::move(r));
    }
}

double StreamSender::timeout_ms() const { return std::max(config_.min_timeout_ms, config_.timeout_factor * srtt_); }

void StreamSender::start(PaymentContext& ctx) {
    if (results_.empty()) return;
    ctx.set_timer(std::max(0.0, config_.start_ms - ctx.now()), kStartToken);
}

void StreamSender::begin(PaymentContext& ctx) {
    auto& r = results_[current_];
    r.state = StreamState::Running;
    r.start_ms = ctx.now();
    auto amounts = split_payment(r.spec.total, r.spec.packet_amount);
    r.packets = static_cast<std::uint32_t>(amounts.size());
    r.fulfilled_at.assign(amounts.size(), std::numeric_limits<double>::quiet_NaN());
    seqs_.assign(amounts.size(), {});
    for (std::size_t i = 0; i < amounts.size(); ++i) seqs_[i].amount = amounts[i];
    next_seq_ = 0;
    in_flight_ = 0;
    fill_window(ctx);
}

void StreamSender::fill_window(PaymentContext& ctx) {
    while (in_flight_ < config_.window && next_seq_ < seqs_.size()) {
        auto seq = next_seq_++;
        seqs_[seq].in_flight = true;
        ++in_flight_;
        send_seq(ctx, seq);
    }
}

void StreamSender::send_seq(PaymentContext& ctx, std::uint32_t seq) {
    auto& r = results_[current_];
    auto& s = seqs_[seq];
    ++s.attempts;
    ++r.sends;
    if (s.attempts > 1) ++r.retries;
    s.sent_ms = ctx.now();
    auto cond = make_condition(make_preimage(config_.secret, r.spec.payment_id, seq));
    auto p = IlpPacket::prepare(r.spec.payment_id, seq, config_.dst_address, s.amount, cond,
                                ctx.now() + config_.expiry_ms);
    s.timer = ctx.set_timer(timeout_ms(), (static_cast<std::uint64_t>(current_) << 32) | seq);
    ctx.log("prepare_sent", p, s.attempts > 1 ? "retry" : "ok");
    ctx.send(config_.peer, p);
}

void StreamSender::retry_or_fail(PaymentContext& ctx, std::uint32_t seq) {
    if (seqs_[seq].attempts > config_.max_retries) {
        finish(ctx, StreamState::Failed);
        return;
    }
    send_seq(ctx, seq);
}

void StreamSender::finish(PaymentContext& ctx, StreamState state) {
    auto& r = results_[current_];
    r.state = state;
    r.end_ms = ctx.now();
    for (auto& s : seqs_) {
        if (s.timer) ctx.cancel_timer(s.timer);
        s.timer = 0;
    }
    IlpPacket marker;
    marker.payment_id = r.spec.payment_id;
    marker.amount = r.fulfilled_amount;
    ctx.log("payment_end", marker, to_string(state));
    ++current_;
    if (current_ < results_.size()) begin(ctx);
}

void StreamSender::on_packet(PaymentContext& ctx, const std::string&, const IlpPacket& p) {
    if (done() || p.kind == PacketKind::Prepare) return;
    auto& r = results_[current_];
    if (p.payment_id != r.spec.payment_id || p.seq >= seqs_.size()) {
        ctx.log(p.kind == PacketKind::Fulfill ? "fulfill_recv" : "reject_recv", p, "stale");
        return;
    }
    auto& s = seqs_[p.seq];
    if (s.fulfilled || !s.in_flight) return;

    if (p.kind == PacketKind::Fulfill &&
        make_condition(p.fulfillment) == make_condition(make_preimage(config_.secret, r.spec.payment_id, p.seq))) {
        s.fulfilled = true;
        s.in_flight = false;
        --in_flight_;
        if (s.timer) ctx.cancel_timer(s.timer);
        s.timer = 0;
        if (s.attempts == 1) {
            double sample = ctx.now() - s.sent_ms;
            srtt_ = have_sample_ ? 0.875 * srtt_ + 0.125 * sample : sample;
            have_sample_ = true;
        }
        r.fulfilled_amount += s.amount;
        ++r.fulfilled_packets;
        r.fulfilled_at[p.seq] = ctx.now();
        IlpPacket logged = p;
        logged.amount = s.amount;
        ctx.log("fulfill_recv", logged, "ok");
        if (r.fulfilled_packets == r.packets) {
            finish(ctx, StreamState::Complete);
        } else {
            fill_window(ctx);
        }
        return;
    }
    // Reject, or a fulfillment that does not match: retry after a timeout.
    ++r.rejects;
    ctx.log("reject_recv", p, p.kind == PacketKind::Reject ? to_string(p.code) : "bad_fulfillment");
    if (s.timer) ctx.cancel_timer(s.timer);
    s.timer = ctx.set_timer(timeout_ms(), (static_cast<std::uint64_t>(current_) << 32) | p.seq | (1ULL << 31));
}

void StreamSender::on_timer(PaymentContext& ctx, std::uint64_t token) {
    if (token == kStartToken) {
        begin(ctx);
        return;
    }
    if (done() || (token >> 32) != current_) return;
    const bool after_reject = token & (1ULL << 31);
    auto seq = static_cast<std::uint32_t>(token & 0x7fffffffULL);
    if (seq >= seqs_.size()) return;
    auto& s = seqs_[seq];
    s.timer = 0;
    if (s.fulfilled || !s.in_flight) return;
    if (!after_reject) {
        ++results_[current_].timeouts;
        IlpPacket logged;
        logged.payment_id = results_[current_].spec.payment_id;
        logged.seq = seq;
        logged.amount = s.amount;
        ctx.log("timeout", logged, "retry");
    }
    retry_or_fail(ctx, seq);
}

// ---------------------------------------------------------------------------
// PingSender

PingSender::PingSender(PingConfig config) : config_(std::move(config)) {
    rtts_.assign(config_.count, std::nullopt);
    sent_.assign(config_.count, 0.0);
    timers_.assign(config_.count, 0);
    closed_.assign(config_.count, false);
}

std::vector<double> PingSender::samples() const {
    std::vector<double> out;
    for (const auto& r : rtts_)
        if (r) out.push_back(*r);
    return out;
}

unsigned PingSender::timeouts() const {
    unsigned n = 0;
    for (std::size_t i = 0; i < rtts_.size(); ++i)
        if (closed_[i] && !rtts_[i]) ++n;
    return n;
}

void PingSender::start(PaymentContext& ctx) {
    if (config_.count == 0) return;
    ctx.set_timer(std::max(0.0, config_.start_ms - ctx.now()), 0);
}

void PingSender::on_timer(PaymentContext& ctx, std::uint64_t token) {
    if (token & kPingTimeout) {
        auto i = static_cast<std::uint32_t>(token & ~kPingTimeout);
        if (i >= config_.count || closed_[i]) return;
        closed_[i] = true;
        ++finished_;
        IlpPacket logged;
        logged.payment_id = config_.payment_id;
        logged.seq = i;
        ctx.log("timeout", logged, "lost");
        return;
    }
    auto i = static_cast<std::uint32_t>(token);
    if (i >= config_.count || i != next_) return;
    ++next_;
    auto cond = make_condition(make_preimage(config_.secret, config_.payment_id, i));
    auto p = IlpPacket::prepare(config_.payment_id, i, config_.dst_address, 1, cond, ctx.now() + config_.expiry_ms);
    sent_[i] = ctx.now();
    timers_[i] = ctx.set_timer(config_.timeout_ms, kPingTimeout | i);
    if (next_ < config_.count) ctx.set_timer(config_.interval_ms, next_);
    ctx.log("prepare_sent", p, "ping");
    ctx.send(config_.peer, p);
}

void PingSender::on_packet(PaymentContext& ctx, const std::string&, const IlpPacket& p) {
    if (p.kind == PacketKind::Prepare || p.payment_id != config_.payment_id || p.seq >= config_.count) return;
    auto i = p.seq;
    if (closed_[i] || i >= next_) return;
    closed_[i] = true;
    ++finished_;
    if (timers_[i]) ctx.cancel_timer(timers_[i]);
    if (p.kind == PacketKind::Fulfill &&
        make_condition(p.fulfillment) == make_condition(make_preimage(config_.secret, config_.payment_id, i))) {
        rtts_[i] = ctx.now() - sent_[i];
        ctx.log("fulfill_recv", p, "ok");
    } else {
        ctx.log("reject_recv", p, p.kind == PacketKind::Reject ? to_string(p.code) : "bad_fulfillment");
    }
}

}  // namespace spon::payment
