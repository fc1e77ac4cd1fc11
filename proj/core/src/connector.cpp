#include <algorithm>

#include "spon/payment.hpp"

namespace spon::payment {

namespace {
__extension__ typedef __int128 i128;
}  // namespace

Connector::Connector(ConnectorConfig config) : config_(std::move(config)) {
    if (config_.fee_ppm > 1'000'000) throw std::invalid_argument("fee_ppm above 1e6");
}

void Connector::add_peer(const std::string& peer, PeerAccount account) {
    if (!account.ledger) throw std::invalid_argument("peer without ledger");
    account.ledger->open(account.own_account);
    account.ledger->open(account.peer_account);
    peers_[peer] = std::move(account);
}

void Connector::add_route(const std::string& prefix, const std::string& peer) {
    if (!peers_.count(peer)) throw std::invalid_argument("route to unknown peer '" + peer + "'");
    routes_.emplace_back(prefix, peer);
}

void Connector::set_rate(const std::string& from_currency, const std::string& to_currency, Rate rate) {
    if (rate.num <= 0 || rate.den <= 0) throw std::invalid_argument("rates must be positive");
    rates_[{from_currency, to_currency}] = rate;
}

std::optional<Amount> Connector::forward_amount(Amount amount, const std::string& from_currency,
                                                const std::string& to_currency) const {
    Rate r;
    auto it = rates_.find({from_currency, to_currency});
    if (it != rates_.end()) {
        r = it->second;
    } else if (from_currency != to_currency) {
        return std::nullopt;
    }
    i128 num = static_cast<i128>(amount) * r.num * (1'000'000 - config_.fee_ppm);
    i128 den = static_cast<i128>(r.den) * 1'000'000;
    return static_cast<Amount>(num / den);
}

std::optional<std::string> Connector::route(const std::string& address) const {
    const std::pair<std::string, std::string>* best = nullptr;
    for (const auto& r : routes_)
        if (address_has_prefix(address, r.first) && (!best || r.first.size() > best->first.size())) best = &r;
    if (!best) return std::nullopt;
    return best->second;
}

void Connector::on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& p) {
    switch (p.kind) {
        case PacketKind::Prepare: on_prepare(ctx, from, p); break;
        case PacketKind::Fulfill: on_fulfill(ctx, from, p); break;
        case PacketKind::Reject: on_reject(ctx, from, p.code, p); break;
    }
}

void Connector::reply_reject(PaymentContext& ctx, const std::string& to, const IlpPacket& p, RejectCode code) {
    ++stats_.rejected;
    ctx.log("reject_sent", p, to_string(code));
    ctx.send(to, IlpPacket::reject(p.payment_id, p.seq, code));
}

void Connector::on_prepare(PaymentContext& ctx, const std::string& from, const IlpPacket& p) {
    auto in_it = peers_.find(from);
    if (in_it == peers_.end()) {
        ctx.log("prepare_recv", p, "unknown_peer");
        return;
    }
    const Key key{from, p.payment_id, p.seq};
    if (auto it = by_in_.find(key); it != by_in_.end()) {
        auto& r = records_[it->second];
        if (r.status == ForwardStatus::Pending) {
            ++stats_.duplicates;
            ctx.log("prepare_fwd", r.out_packet, "resend");
            ctx.send(r.out_peer, r.out_packet);
            return;
        }
        if (r.status == ForwardStatus::Fulfilled) {
            ++stats_.duplicates;
            ctx.log("fulfill_sent", p, "resend");
            ctx.send(from, IlpPacket::fulfill(p.payment_id, p.seq, r.fulfillment));
            return;
        }
    }
    ctx.log("prepare_recv", p, "ok");

    const double now = ctx.now();
    if (now >= p.expiry_ms) return reply_reject(ctx, from, p, RejectCode::Expired);
    auto out_peer = route(p.dst_address);
    if (!out_peer || *out_peer == from) return reply_reject(ctx, from, p, RejectCode::NoRoute);
    const PeerAccount& in = in_it->second;
    const PeerAccount& out = peers_.at(*out_peer);
    auto amount = forward_amount(p.amount, in.ledger->currency(), out.ledger->currency());
    if (!amount) return reply_reject(ctx, from, p, RejectCode::NoRoute);
    const double out_expiry = p.expiry_ms - config_.expiry_margin_ms;
    if (out_expiry <= now) return reply_reject(ctx, from, p, RejectCode::Expired);

    HoldId hold;
    try {
        hold = in.ledger->hold(in.peer_account, in.own_account, p.amount, p.expiry_ms, p.payment_id, p.seq);
    } catch (const InsufficientFunds&) {
        return reply_reject(ctx, from, p, RejectCode::Insufficient);
    }

    const std::size_t idx = records_.size();
    ForwardRecord r;
    r.in_peer = from;
    r.out_peer = *out_peer;
    r.payment_id = p.payment_id;
    r.seq = p.seq;
    r.in_amount = p.amount;
    r.out_amount = *amount;
    r.in_hold = hold;
    r.out_packet = IlpPacket::prepare(p.payment_id, p.seq, p.dst_address, *amount, p.condition, out_expiry);
    r.timer = ctx.set_timer(out_expiry - now, idx);
    records_.push_back(std::move(r));
    by_in_[key] = idx;
    by_out_[{*out_peer, p.payment_id, p.seq}] = idx;
    ++stats_.forwarded;
    ctx.log("prepare_fwd", records_[idx].out_packet, "ok");
    ctx.send(*out_peer, records_[idx].out_packet);
}

void Connector::reject_upstream(PaymentContext& ctx, std::size_t idx, RejectCode code) {
    auto& r = records_[idx];
    r.status = ForwardStatus::Rejected;
    peers_.at(r.in_peer).ledger->void_hold(r.in_hold);
    if (r.timer) ctx.cancel_timer(r.timer);
    r.timer = 0;
    ++stats_.rejected;
    auto reject = IlpPacket::reject(r.payment_id, r.seq, code);
    ctx.log("reject_sent", reject, to_string(code));
    ctx.send(r.in_peer, reject);
}

void Connector::on_fulfill(PaymentContext& ctx, const std::string& from, const IlpPacket& p) {
    auto it = by_out_.find({from, p.payment_id, p.seq});
    if (it == by_out_.end()) {
        ctx.log("fulfill_recv", p, "unknown");
        return;
    }
    const std::size_t idx = it->second;
    auto& r = records_[idx];
    if (r.status == ForwardStatus::Fulfilled || r.status == ForwardStatus::Mismatch) {
        ++stats_.duplicates;
        return;
    }
    if (make_condition(p.fulfillment) != r.out_packet.condition) {
        ctx.log("fulfill_recv", p, "bad_fulfillment");
        if (r.status == ForwardStatus::Pending) reject_upstream(ctx, idx, RejectCode::BadFulfillment);
        return;
    }
    if (r.status == ForwardStatus::Rejected) {
        r.status = ForwardStatus::Mismatch;
        r.fulfillment = p.fulfillment;
        ++stats_.mismatches;
        ctx.log("fulfill_recv", p, "mismatch");
        return;
    }
    if (r.timer) ctx.cancel_timer(r.timer);
    r.timer = 0;
    r.fulfillment = p.fulfillment;
    if (!peers_.at(r.in_peer).ledger->execute(r.in_hold, ctx.now())) {
        r.status = ForwardStatus::Mismatch;
        ++stats_.mismatches;
        ctx.log("fulfill_recv", p, "mismatch");
        auto reject = IlpPacket::reject(r.payment_id, r.seq, RejectCode::Expired);
        ctx.send(r.in_peer, reject);
        return;
    }
    r.status = ForwardStatus::Fulfilled;
    ++stats_.fulfilled;
    ctx.log("fulfill_fwd", p, "ok");
    ctx.send(r.in_peer, IlpPacket::fulfill(r.payment_id, r.seq, p.fulfillment));
}

void Connector::on_reject(PaymentContext& ctx, const std::string& from, RejectCode code, const IlpPacket& p) {
    auto it = by_out_.find({from, p.payment_id, p.seq});
    ctx.log("reject_recv", p, to_string(code));
    if (it == by_out_.end() || records_[it->second].status != ForwardStatus::Pending) return;
    reject_upstream(ctx, it->second, code);
}

void Connector::on_timer(PaymentContext& ctx, std::uint64_t token) {
    if (token >= records_.size()) return;
    auto& r = records_[token];
    r.timer = 0;
    if (r.status != ForwardStatus::Pending) return;
    reject_upstream(ctx, token, RejectCode::Expired);
}

void Connector::on_transport_failure(PaymentContext& ctx, const std::string& peer, const IlpPacket& p) {
    if (p.kind != PacketKind::Prepare) return;
    auto it = by_out_.find({peer, p.payment_id, p.seq});
    if (it == by_out_.end() || records_[it->second].status != ForwardStatus::Pending) return;
    reject_upstream(ctx, it->second, RejectCode::LinkDown);
}

// ---------------------------------------------------------------------------

Receiver::Receiver(std::string address, std::string secret)
    : address_(std::move(address)), secret_(std::move(secret)) {}

void Receiver::add_peer(const std::string& peer, PeerAccount account) {
    if (!account.ledger) throw std::invalid_argument("peer without ledger");
    account.ledger->open(account.own_account);
    account.ledger->open(account.peer_account);
    peers_[peer] = std::move(account);
}

Amount Receiver::received(std::uint64_t payment_id) const {
    auto it = received_.find(payment_id);
    return it == received_.end() ? 0 : it->second;
}

void Receiver::on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& p) {
    if (p.kind != PacketKind::Prepare) return;
    auto reject = [&](RejectCode code) {
        ctx.log("reject_sent", p, to_string(code));
        ctx.send(from, IlpPacket::reject(p.payment_id, p.seq, code));
    };
    const auto key = std::pair{p.payment_id, p.seq};
    if (auto it = fulfilled_.find(key); it != fulfilled_.end()) {
        ++duplicates_;
        ctx.log("fulfill_sent", p, "resend");
        ctx.send(from, IlpPacket::fulfill(p.payment_id, p.seq, it->second));
        return;
    }
    auto peer = peers_.find(from);
    if (peer == peers_.end()) return reject(RejectCode::NoRoute);
    if (!address_has_prefix(p.dst_address, address_)) return reject(RejectCode::NoRoute);
    if (ctx.now() >= p.expiry_ms) return reject(RejectCode::Expired);
    const Hash32 preimage = make_preimage(secret_, p.payment_id, p.seq);
    if (make_condition(preimage) != p.condition) return reject(RejectCode::BadFulfillment);

    const PeerAccount& acct = peer->second;
    HoldId hold;
    try {
        hold = acct.ledger->hold(acct.peer_account, acct.own_account, p.amount, p.expiry_ms, p.payment_id, p.seq);
    } catch (const InsufficientFunds&) {
        return reject(RejectCode::Insufficient);
    }
    acct.ledger->execute(hold, ctx.now());
    fulfilled_.emplace(key, preimage);
    received_[p.payment_id] += p.amount;
    total_ += p.amount;
    ctx.log("fulfill_sent", p, "ok");
    ctx.send(from, IlpPacket::fulfill(p.payment_id, p.seq, preimage));
}

}  // namespace spon::payment
