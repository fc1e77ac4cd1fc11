#include <cstdio>
#include <ostream>

#include "spon/payment.hpp"

namespace spon::payment {

void TxLog::add(double time_ms, const std::string& actor, const std::string& kind, std::uint64_t pid,
                std::uint32_t seq, Amount amount, const std::string& result) {
    rows_.push_back({time_ms, actor, kind, pid, seq, amount, result});
}

void TxLog::write_csv(std::ostream& os) const {
    os << "time_ms,actor,kind,payment_id,seq,amount,result\n";
    char buf[40];
    for (const auto& r : rows_) {
        std::snprintf(buf, sizeof buf, "%.17g", r.time_ms);
        os << buf << ',' << r.actor << ',' << r.kind << ',' << r.payment_id << ',' << r.seq << ',' << r.amount
           << ',' << r.result << '\n';
    }
}

ServiceMap ServiceMap::uniform(overlay::ServiceClass service) {
    ServiceMap m;
    m.prepare.service = service;
    m.fulfill.service = service;
    m.reject.service = service;
    return m;
}

const ServiceBinding& ServiceMap::for_kind(PacketKind k) const {
    switch (k) {
        case PacketKind::Prepare: return prepare;
        case PacketKind::Fulfill: return fulfill;
        case PacketKind::Reject: return reject;
    }
    return prepare;
}

class PaymentClient::Adapter : public PaymentContext {
  public:
    Adapter(PaymentClient& pc, netsim::ClientContext& ctx) : pc_(pc), ctx_(ctx) {}

    double now() const override { return ctx_.now(); }
    const std::string& self() const override { return ctx_.self(); }

    void send(const std::string& peer, const IlpPacket& p) override {
        auto it = pc_.peers_.find(peer);
        if (it == pc_.peers_.end()) throw std::invalid_argument(ctx_.self() + " has no binding for peer " + peer);
        Bytes bytes = encode_packet(p);
        bool ok = true;
        switch (it->second.kind) {
            case TransportKind::Local:
                ctx_.send_local(peer, std::move(bytes));
                break;
            case TransportKind::Overlay: {
                const auto& b = it->second.services.for_kind(p.kind);
                overlay::SendOptions opts;
                opts.priority = b.priority;
                ok = ctx_.send_overlay(peer, std::move(bytes), b.service, opts);
                break;
            }
            case TransportKind::Direct:
                ok = ctx_.send_direct(peer, std::move(bytes));
                break;
        }
        if (!ok) {
            auto id = pc_.next_failure_++;
            pc_.failures_.emplace(id, std::pair{peer, p});
            ctx_.set_timer(0.0, kFailureBit | id);
        }
    }

    std::uint64_t set_timer(double delay_ms, std::uint64_t token) override {
        if (token & kFailureBit) throw std::invalid_argument("timer token uses a reserved bit");
        return ctx_.set_timer(delay_ms, token);
    }
    void cancel_timer(std::uint64_t id) override { ctx_.cancel_timer(id); }

    void log(const std::string& kind, const IlpPacket& p, const std::string& result) override {
        Amount amount = p.kind == PacketKind::Prepare ? p.amount : 0;
        if (pc_.log_) pc_.log_->add(ctx_.now(), ctx_.self(), kind, p.payment_id, p.seq, amount, result);
        ctx_.log(kind, std::to_string(p.payment_id) + ":" + std::to_string(p.seq) + " " + result);
    }

  private:
    PaymentClient& pc_;
    netsim::ClientContext& ctx_;
};

PaymentClient::PaymentClient(std::shared_ptr<Actor> actor, std::shared_ptr<TxLog> log)
    : actor_(std::move(actor)), log_(std::move(log)) {}

void PaymentClient::bind_peer(const std::string& peer, PeerBinding binding) { peers_[peer] = binding; }

void PaymentClient::on_start(netsim::ClientContext& ctx) {
    Adapter a(*this, ctx);
    actor_->start(a);
}

void PaymentClient::on_message(netsim::ClientContext& ctx, const netsim::Envelope& env) {
    IlpPacket p;
    try {
        p = decode_packet(env.body);
    } catch (const MalformedPacket&) {
        ++malformed_;
        return;
    }
    Adapter a(*this, ctx);
    actor_->on_packet(a, env.src, p);
}

void PaymentClient::on_timer(netsim::ClientContext& ctx, std::uint64_t token) {
    Adapter a(*this, ctx);
    if (token & kFailureBit) {
        auto it = failures_.find(token & ~kFailureBit);
        if (it == failures_.end()) return;
        auto [peer, packet] = std::move(it->second);
        failures_.erase(it);
        actor_->on_transport_failure(a, peer, packet);
        return;
    }
    actor_->on_timer(a, token);
}

void PaymentClient::on_send_failed(netsim::ClientContext& ctx, const netsim::Envelope& env) {
    IlpPacket p;
    try {
        p = decode_packet(env.body);
    } catch (const MalformedPacket&) {
        return;
    }
    Adapter a(*this, ctx);
    actor_->on_transport_failure(a, env.dst, p);
}

}  // namespace spon::payment
