#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "spon/frame.hpp"
#include "spon/overlay.hpp"
#include "spon/topology.hpp"
#include "spon/underlay.hpp"

namespace spon::netsim {

using overlay::Bytes;

std::uint64_t splitmix64(std::uint64_t x);
/// Uniform draw in [0, 1) from 53 random bits.
double unit_draw(std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Fault schedules

struct BehaviorChange {
    NodeId node;
    overlay::Behavior behavior;
    bool operator==(const BehaviorChange&) const = default;
};
struct HijackChange {
    Hijack hijack;
    bool operator==(const HijackChange&) const = default;
};
using ScheduleChange = std::variant<NodeChange, LinkChange, LossChange, BehaviorChange, HijackChange>;

struct ScheduleEntry {
    double time_ms = 0.0;
    ScheduleChange change;
    bool operator==(const ScheduleEntry&) const = default;
};

struct FaultSchedule {
    std::vector<ScheduleEntry> entries;

    void add(double time_ms, ScheduleChange change);
    /// Throws TopologyError for negative times or unknown targets.
    void validate(const Topology& topo) const;
};

/// Down at period, up at 2*period, ... for every listed node at once,
/// `cycles` times. Entries are ordered by time, then by node order given.
FaultSchedule meltdown_schedule(const Topology& topo, const std::vector<NodeId>& nodes, double period_ms,
                                unsigned cycles);

// ---------------------------------------------------------------------------
// Clients

/// What clients exchange. Overlay payloads carry the encoded envelope.
struct Envelope {
    std::string src;
    std::string dst;
    Bytes body;
};
Bytes encode_envelope(const Envelope& e);
/// nullopt when `bytes` is not an envelope.
std::optional<Envelope> decode_envelope(const Bytes& bytes);

class ClientContext {
  public:
    virtual ~ClientContext() = default;
    virtual TimeMs now() const = 0;
    virtual const std::string& self() const = 0;
    /// To a client attached at the same overlay node, after the local latency.
    virtual void send_local(const std::string& dst, Bytes body) = 0;
    /// Via the attached overlay node. False when the overlay has no route.
    virtual bool send_overlay(const std::string& dst, Bytes body, overlay::ServiceClass service,
                              overlay::SendOptions options = {}) = 0;
    /// Over the configured direct channel to `dst`. False when none exists.
    virtual bool send_direct(const std::string& dst, Bytes body) = 0;
    virtual std::uint64_t set_timer(double delay_ms, std::uint64_t token) = 0;
    virtual void cancel_timer(std::uint64_t id) = 0;
    virtual void log(const std::string& event, const std::string& detail) = 0;
};

class Client {
  public:
    virtual ~Client() = default;
    virtual void on_start(ClientContext&) {}
    virtual void on_message(ClientContext& ctx, const Envelope& env) = 0;
    virtual void on_timer(ClientContext&, std::uint64_t /*token*/) {}
    /// A direct-channel transfer gave up after its retries.
    virtual void on_send_failed(ClientContext&, const Envelope&) {}
};

// ---------------------------------------------------------------------------
// Direct (non-overlay) baseline channel

/// Point-to-point channel between two clients with end-to-end retransmission
/// only. Availability follows a pinned overlay path and/or AS reachability.
struct DirectLinkSpec {
    std::string a;
    std::string b;
    double latency_ms = 0.0;
    double loss = 0.0;
    double bw_mbps = 100.0;
    std::optional<std::vector<NodeId>> pinned_path;
    std::optional<std::pair<AsNumber, AsNumber>> as_pair;
};

struct DirectTransportConfig {
    double min_rto_ms = 200.0;
    double max_rto_ms = 60000.0;
    unsigned max_retries = 15;
};

// ---------------------------------------------------------------------------
// Trace

struct TraceRow {
    double time_ms;
    std::string event;
    std::string node;
    std::string detail;
};

struct Trace {
    std::vector<TraceRow> rows;
    std::map<std::string, std::uint64_t> counters;
    double end_time_ms = 0.0;
    std::uint64_t events = 0;

    void write_csv(std::ostream& os) const;
    /// Stable key=value summary block.
    std::string summary() const;
    std::uint64_t counter(const std::string& key) const;
};

class EventCapExceeded : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    overlay::NodeConfig node;
    /// Delay before a node's view reflects a topology change.
    double view_delay_ms = 100.0;
    double local_latency_ms = 0.0;
    std::uint64_t event_cap = 10'000'000;
    bool record_trace = false;
    DirectTransportConfig direct;
};

/// Hop frame arrival at `to`; `bytes` is the encoded size on the wire.
using ArrivalObserver = std::function<void(TimeMs, NodeIndex from, NodeIndex to, const overlay::Frame&, std::size_t bytes)>;
using DeliverObserver = std::function<void(TimeMs, NodeIndex node, const overlay::Deliver&)>;

/// Deterministic discrete-event world: overlay nodes, link models, clients,
/// direct channels, fault schedule and AS underlay.
class Simulator {
  public:
    Simulator(std::shared_ptr<const Topology> topo, SimConfig config = {}, std::uint64_t seed = 0);
    ~Simulator();
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;

    /// Attaches at the node given by the topology's attachment table.
    void add_client(const std::string& id, std::shared_ptr<Client> client);
    void add_client(const std::string& id, NodeIndex node, std::shared_ptr<Client> client);
    void add_direct_link(const DirectLinkSpec& spec);
    void set_underlay(AsUnderlay underlay);
    void schedule(const FaultSchedule& schedule);
    void set_behavior(const NodeId& node, overlay::Behavior b);
    /// Raw overlay send at virtual time `at` (client-command event).
    void schedule_send(double at, NodeIndex src, NodeIndex dst, overlay::Payload payload,
                       overlay::ServiceClass service, overlay::SendOptions options = {});

    void on_arrival(ArrivalObserver obs) { arrival_observer_ = std::move(obs); }
    void on_deliver(DeliverObserver obs) { deliver_observer_ = std::move(obs); }

    /// Runs until quiescence or until the next event lies past horizon_ms.
    /// Throws EventCapExceeded. May be called again to continue.
    Trace run(double horizon_ms);

    TimeMs now() const { return now_; }
    const Topology& topology() const { return *topo_; }
    const TopologyView& truth() const { return truth_; }
    const AsUnderlay* underlay() const { return underlay_ ? &*underlay_ : nullptr; }
    overlay::NodeState& node(NodeIndex n) { return nodes_[n]; }
    const overlay::NodeState& node(NodeIndex n) const { return nodes_[n]; }
    const Trace& trace() const { return trace_; }
    /// Frames put on / lost on link l in direction from -> other end.
    std::uint64_t link_frames(LinkIndex l, NodeIndex from) const;
    std::uint64_t link_losses(LinkIndex l, NodeIndex from) const;
    bool direct_usable(const std::string& a, const std::string& b) const;

  private:
    class Context;
    enum class EventKind : std::uint8_t;
    struct Event {
        double t = 0.0;
        std::uint64_t order = 0;
        EventKind kind{};
        std::uint32_t a = 0;
        std::uint32_t b = 0;
        std::uint64_t x = 0;
        std::uint64_t y = 0;
        overlay::FramePtr frame;
        std::shared_ptr<const Envelope> env;
    };
    struct ClientSlot {
        std::string id;
        NodeIndex node = 0;
        std::shared_ptr<Client> client;
        std::unique_ptr<Context> ctx;
    };
    struct Channel {
        std::size_t ca = 0;
        std::size_t cb = 0;
        DirectLinkSpec spec;
        std::optional<IndexPath> pinned;
        std::mt19937_64 rng[2];
        double busy_until[2] = {0.0, 0.0};
    };
    struct Transfer {
        std::size_t channel = 0;
        int dir = 0;
        std::shared_ptr<const Envelope> env;
        unsigned attempt = 0;
        double rto_ms = 0.0;
    };
    struct PendingSend {
        NodeIndex src;
        NodeIndex dst;
        overlay::Payload payload;
        overlay::ServiceClass service;
        overlay::SendOptions options;
    };
    struct LinkDir {
        std::mt19937_64 rng;
        std::uint64_t frames = 0;
        std::uint64_t losses = 0;
    };

    void push(double t, Event ev);
    void dispatch_event(Event& ev);
    void apply_effects(NodeIndex n, overlay::Effects&& fx);
    void transmit(NodeIndex from, NodeIndex to, overlay::FramePtr frame);
    void apply_change(const ScheduleChange& change);
    void refresh_underlay_links();
    void publish_view();
    void deliver_to_client(NodeIndex node, const overlay::Deliver& d);
    void client_message(std::size_t client, const Envelope& env);
    void direct_attempt(std::uint64_t transfer_id);
    bool channel_usable(const Channel& ch) const;
    LinkDir& link_dir(LinkIndex l, NodeIndex from);
    void record(const char* event, NodeIndex node, std::string detail);
    void record(const char* event, const std::string& who, std::string detail);
    void count(const std::string& key, std::uint64_t n = 1) {
        auto& slot = counter_slots_[key];
        if (!slot) slot = &trace_.counters[key];
        *slot += n;
    }

    std::shared_ptr<const Topology> topo_;
    SimConfig config_;
    std::uint64_t seed_;
    TopologyView truth_;
    std::vector<bool> fault_link_down_;
    std::optional<AsUnderlay> underlay_;
    std::vector<overlay::NodeState> nodes_;
    std::vector<LinkDir> link_dirs_;

    std::vector<ClientSlot> clients_;
    std::unordered_map<std::string, std::size_t> client_index_;
    std::vector<Channel> channels_;
    std::map<std::uint64_t, Transfer> transfers_;
    std::uint64_t next_transfer_ = 1;
    std::set<std::uint64_t> cancelled_client_timers_;
    std::uint64_t next_client_timer_ = 1;

    std::vector<std::shared_ptr<const TopologyView>> snapshots_;
    std::vector<ScheduleEntry> schedule_;
    std::vector<PendingSend> pending_sends_;

    struct HeapKey {
        double t;
        std::uint64_t order;
        std::uint32_t slot;
    };
    std::vector<HeapKey> heap_;
    std::vector<Event> slab_;
    std::vector<std::uint32_t> free_slots_;
    std::uint64_t order_ = 0;
    TimeMs now_ = 0.0;
    bool started_ = false;
    Trace trace_;
    std::unordered_map<std::string, std::uint64_t*> counter_slots_;

    ArrivalObserver arrival_observer_;
    DeliverObserver deliver_observer_;
};

}  // namespace spon::netsim
