#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "spon/ilp.hpp"
#include "spon/ledger.hpp"
#include "spon/netsim.hpp"

namespace spon::payment {

// ---------------------------------------------------------------------------
// Transaction log

struct TxRecord {
    double time_ms;
    std::string actor;
    std::string kind;
    std::uint64_t payment_id;
    std::uint32_t seq;
    Amount amount;
    std::string result;
};

class TxLog {
  public:
    void add(double time_ms, const std::string& actor, const std::string& kind, std::uint64_t pid,
             std::uint32_t seq, Amount amount, const std::string& result);
    const std::vector<TxRecord>& rows() const { return rows_; }
    /// time_ms,actor,kind,payment_id,seq,amount,result
    void write_csv(std::ostream& os) const;

  private:
    std::vector<TxRecord> rows_;
};

// ---------------------------------------------------------------------------
// Actors

/// What a payment actor can do; supplied by the hosting client.
class PaymentContext {
  public:
    virtual ~PaymentContext() = default;
    virtual double now() const = 0;
    virtual const std::string& self() const = 0;
    /// Transport failures come back through Actor::on_transport_failure.
    virtual void send(const std::string& peer, const IlpPacket& packet) = 0;
    virtual std::uint64_t set_timer(double delay_ms, std::uint64_t token) = 0;
    virtual void cancel_timer(std::uint64_t id) = 0;
    virtual void log(const std::string& kind, const IlpPacket& p, const std::string& result) = 0;
};

class Actor {
  public:
    virtual ~Actor() = default;
    virtual void start(PaymentContext&) {}
    virtual void on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& packet) = 0;
    virtual void on_timer(PaymentContext&, std::uint64_t /*token*/) {}
    virtual void on_transport_failure(PaymentContext&, const std::string& /*peer*/, const IlpPacket&) {}
};

/// An account relationship with a neighbour: both hold accounts on `ledger`.
struct PeerAccount {
    Ledger* ledger = nullptr;
    std::string own_account;
    std::string peer_account;
};

// ---------------------------------------------------------------------------
// Connector

struct Rate {
    std::int64_t num = 1;
    std::int64_t den = 1;
};

struct ConnectorConfig {
    std::string address;
    double expiry_margin_ms = 1000.0;
    std::uint32_t fee_ppm = 0;
};

enum class ForwardStatus { Pending, Fulfilled, Rejected, Mismatch };

/// One forwarding attempt, kept for settlement checks.
struct ForwardRecord {
    std::string in_peer;
    std::string out_peer;
    std::uint64_t payment_id = 0;
    std::uint32_t seq = 0;
    Amount in_amount = 0;
    Amount out_amount = 0;
    HoldId in_hold = 0;
    ForwardStatus status = ForwardStatus::Pending;
    IlpPacket out_packet;
    Hash32 fulfillment{};
    std::uint64_t timer = 0;
};

struct ConnectorStats {
    std::uint64_t forwarded = 0;
    std::uint64_t fulfilled = 0;
    std::uint64_t rejected = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t mismatches = 0;
};

class Connector : public Actor {
  public:
    explicit Connector(ConnectorConfig config);

    void add_peer(const std::string& peer, PeerAccount account);
    void add_route(const std::string& prefix, const std::string& peer);
    void set_rate(const std::string& from_currency, const std::string& to_currency, Rate rate);

    /// floor(amount x rate x (1 - fee_ppm / 1e6)); nullopt when no rate is known.
    std::optional<Amount> forward_amount(Amount amount, const std::string& from_currency,
                                         const std::string& to_currency) const;
    /// Longest-prefix match.
    std::optional<std::string> route(const std::string& address) const;

    const ConnectorConfig& config() const { return config_; }
    const ConnectorStats& stats() const { return stats_; }
    const std::vector<ForwardRecord>& records() const { return records_; }
    const std::map<std::string, PeerAccount>& peers() const { return peers_; }

    void on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& packet) override;
    void on_timer(PaymentContext& ctx, std::uint64_t token) override;
    void on_transport_failure(PaymentContext& ctx, const std::string& peer, const IlpPacket& packet) override;

  private:
    using Key = std::tuple<std::string, std::uint64_t, std::uint32_t>;

    void on_prepare(PaymentContext& ctx, const std::string& from, const IlpPacket& p);
    void on_fulfill(PaymentContext& ctx, const std::string& from, const IlpPacket& p);
    void on_reject(PaymentContext& ctx, const std::string& from, RejectCode code, const IlpPacket& p);
    void reject_upstream(PaymentContext& ctx, std::size_t rec, RejectCode code);
    void reply_reject(PaymentContext& ctx, const std::string& to, const IlpPacket& p, RejectCode code);

    ConnectorConfig config_;
    std::map<std::string, PeerAccount> peers_;
    std::vector<std::pair<std::string, std::string>> routes_;
    std::map<std::pair<std::string, std::string>, Rate> rates_;
    std::vector<ForwardRecord> records_;
    std::map<Key, std::size_t> by_in_;
    std::map<Key, std::size_t> by_out_;
    ConnectorStats stats_;
};

// ---------------------------------------------------------------------------
// Receiver

class Receiver : public Actor {
  public:
    Receiver(std::string address, std::string secret);

    void add_peer(const std::string& peer, PeerAccount account);
    const std::string& address() const { return address_; }
    Amount received(std::uint64_t payment_id) const;
    Amount total_received() const { return total_; }
    std::uint64_t duplicates() const { return duplicates_; }

    void on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& packet) override;

  private:
    std::string address_;
    std::string secret_;
    std::map<std::string, PeerAccount> peers_;
    std::map<std::pair<std::uint64_t, std::uint32_t>, Hash32> fulfilled_;
    std::map<std::uint64_t, Amount> received_;
    Amount total_ = 0;
    std::uint64_t duplicates_ = 0;
};

// ---------------------------------------------------------------------------
// STREAM sender

enum class StreamState { Pending, Running, Complete, Failed };
const char* to_string(StreamState s);

struct PaymentSpec {
    std::uint64_t payment_id = 1;
    Amount total = 0;
    Amount packet_amount = 0;
};

struct StreamConfig {
    std::string peer;          ///< first-hop connector
    std::string dst_address;
    std::string secret;        ///< shared with the receiver
    unsigned window = 1;
    unsigned max_retries = 10;
    double initial_rtt_ms = 1000.0;
    double timeout_factor = 4.0;
    double min_timeout_ms = 10.0;
    double expiry_ms = 30000.0;
    double start_ms = 0.0;
};

struct PaymentResult {
    PaymentSpec spec;
    StreamState state = StreamState::Pending;
    Amount fulfilled_amount = 0;
    std::uint32_t packets = 0;
    std::uint32_t fulfilled_packets = 0;
    std::uint64_t sends = 0;
    std::uint64_t retries = 0;
    std::uint64_t rejects = 0;
    std::uint64_t timeouts = 0;
    double start_ms = 0.0;
    double end_ms = 0.0;
    /// Fulfill arrival time per seq (NaN while unfulfilled).
    std::vector<double> fulfilled_at;

    double latency_ms() const { return end_ms - start_ms; }
};

/// ceil(total / packet_amount) packets, the last one possibly smaller.
std::vector<Amount> split_payment(Amount total, Amount packet_amount);

/// Sends the given payments one after another, each split into packets with
/// at most `window` in flight. Retries reuse the same seq and condition.
class StreamSender : public Actor {
  public:
    StreamSender(StreamConfig config, std::vector<PaymentSpec> payments);

    const std::vector<PaymentResult>& results() const { return results_; }
    bool done() const { return current_ >= results_.size(); }
    double srtt_ms() const { return srtt_; }

    void start(PaymentContext& ctx) override;
    void on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& packet) override;
    void on_timer(PaymentContext& ctx, std::uint64_t token) override;

  private:
    struct SeqState {
        Amount amount = 0;
        unsigned attempts = 0;
        bool in_flight = false;
        bool fulfilled = false;
        double sent_ms = 0.0;
        std::uint64_t timer = 0;
    };

    void begin(PaymentContext& ctx);
    void fill_window(PaymentContext& ctx);
    void send_seq(PaymentContext& ctx, std::uint32_t seq);
    void retry_or_fail(PaymentContext& ctx, std::uint32_t seq);
    void finish(PaymentContext& ctx, StreamState state);
    double timeout_ms() const;

    StreamConfig config_;
    std::vector<PaymentResult> results_;
    std::size_t current_ = 0;
    std::vector<SeqState> seqs_;
    std::uint32_t next_seq_ = 0;
    unsigned in_flight_ = 0;
    double srtt_;
    bool have_sample_ = false;
};

// ---------------------------------------------------------------------------
// ILP ping

struct PingConfig {
    std::string peer;
    std::string dst_address;
    std::string secret;
    std::uint64_t payment_id = 1000000;
    unsigned count = 100;
    double interval_ms = 1000.0;
    double timeout_ms = 10000.0;
    double expiry_ms = 30000.0;
    double start_ms = 0.0;
};

/// `count` one-drop prepares at a fixed interval; RTT = fulfill arrival - send.
class PingSender : public Actor {
  public:
    explicit PingSender(PingConfig config);

    /// Per ping; nullopt for timeouts and rejects.
    const std::vector<std::optional<double>>& rtts() const { return rtts_; }
    std::vector<double> samples() const;
    unsigned timeouts() const;
    bool done() const { return finished_ == config_.count; }

    void start(PaymentContext& ctx) override;
    void on_packet(PaymentContext& ctx, const std::string& from, const IlpPacket& packet) override;
    void on_timer(PaymentContext& ctx, std::uint64_t token) override;

  private:
    PingConfig config_;
    std::vector<std::optional<double>> rtts_;
    std::vector<double> sent_;
    std::vector<std::uint64_t> timers_;
    std::vector<bool> closed_;
    unsigned next_ = 0;
    unsigned finished_ = 0;
};

// ---------------------------------------------------------------------------
// Hosting on the simulator

/// Overlay service used for one ILP packet kind.
struct ServiceBinding {
    overlay::ServiceClass service;
    std::uint8_t priority = 0;
};

struct ServiceMap {
    ServiceBinding prepare{{overlay::ServiceKind::Priority, 0}, 1};
    ServiceBinding fulfill{{overlay::ServiceKind::Priority, 0}, 2};
    ServiceBinding reject{{overlay::ServiceKind::Priority, 0}, 2};

    static ServiceMap uniform(overlay::ServiceClass service);
    const ServiceBinding& for_kind(PacketKind k) const;
};

enum class TransportKind { Local, Overlay, Direct };

struct PeerBinding {
    TransportKind kind = TransportKind::Local;
    ServiceMap services;
};

/// Adapts a payment Actor to a simulator Client. Peers are client ids.
class PaymentClient : public netsim::Client {
  public:
    PaymentClient(std::shared_ptr<Actor> actor, std::shared_ptr<TxLog> log);

    void bind_peer(const std::string& peer, PeerBinding binding);
    Actor& actor() { return *actor_; }
    std::uint64_t malformed() const { return malformed_; }

    void on_start(netsim::ClientContext& ctx) override;
    void on_message(netsim::ClientContext& ctx, const netsim::Envelope& env) override;
    void on_timer(netsim::ClientContext& ctx, std::uint64_t token) override;
    void on_send_failed(netsim::ClientContext& ctx, const netsim::Envelope& env) override;

  private:
    class Adapter;
    friend class Adapter;
    static constexpr std::uint64_t kFailureBit = 1ULL << 63;

    std::shared_ptr<Actor> actor_;
    std::shared_ptr<TxLog> log_;
    std::map<std::string, PeerBinding> peers_;
    std::map<std::uint64_t, std::pair<std::string, IlpPacket>> failures_;
    std::uint64_t next_failure_ = 0;
    std::uint64_t malformed_ = 0;
};

// ---------------------------------------------------------------------------
// Settlement

struct SettleReport {
    bool ok = true;
    std::vector<std::string> problems;
    /// Per (connector address, ledger id): actual and expected balance change.
    std::map<std::pair<std::string, std::string>, std::pair<Amount, Amount>> connector_deltas;

    std::string describe() const;
};

/// Voids holds expired at `at_ms`, then checks per-ledger conservation, that
/// no hold is left active, that each connector's balance change equals what
/// its own forwarding records imply, and that every executed forward applied
/// the connector's rate and fee schedule.
SettleReport settle_check(const std::vector<Ledger*>& ledgers, const std::vector<const Connector*>& connectors,
                          double at_ms = std::numeric_limits<double>::infinity());

}  // namespace spon::payment
