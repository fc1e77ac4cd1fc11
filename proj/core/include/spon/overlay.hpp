#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <variant>
#include <vector>

#include "spon/frame.hpp"
#include "spon/scheduler.hpp"
#include "spon/topology.hpp"

namespace spon::overlay {

struct NodeConfig {
    std::size_t max_payload = 64 * 1024;
    std::size_t buffer_capacity = 1024;
    std::size_t dedup_window = 4096;

    // Hop-by-hop recovery on every overlay link.
    bool hop_recovery = true;
    double nack_delay_ms = 1.0;
    unsigned nack_retries = 3;
    std::size_t cache_capacity = 2048;
    double cache_expiry_ms = 2000.0;
    /// Idle time after the last hop-data frame before a tail-loss probe.
    double probe_delay_ms = 1.0;

    unsigned rel_max_retries = 8;
    double min_rto_ms = 1.0;
    /// Default PRIORITY deadline = factor x best-path latency.
    double deadline_factor = 10.0;
};

class PayloadTooLarge : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class BehaviorKind { Honest, DropAll, DropFlow, Delay };

/// Compromised-relay behaviour. DropFlow matches end-to-end (src, dst).
struct Behavior {
    BehaviorKind kind = BehaviorKind::Honest;
    NodeIndex flow_src = 0;
    NodeIndex flow_dst = 0;
    double delay_ms = 0.0;

    static Behavior honest() { return {}; }
    static Behavior drop_all() { return {BehaviorKind::DropAll}; }
    static Behavior drop_flow(NodeIndex s, NodeIndex d) { return {BehaviorKind::DropFlow, s, d}; }
    static Behavior delay(double ms) { return {BehaviorKind::Delay, 0, 0, ms}; }
    bool operator==(const Behavior&) const = default;
};

enum class DropReason {
    Duplicate,
    Malformed,
    Expired,
    BufferFull,
    NoRoute,
    Unrecoverable,
    Adversary,
    GaveUp,
    LinkDown,
};
const char* to_string(DropReason r);

using TimerId = std::uint64_t;

struct LinkTransmit {
    NodeIndex neighbor;
    FramePtr frame;
};
struct Deliver {
    NodeIndex src;
    std::uint64_t seq;
    ServiceClass service;
    Payload payload;
};
struct SetTimer {
    TimerId id;
    double delay_ms;
};
struct CancelTimer {
    TimerId id;
};
struct Drop {
    DropReason reason;
    NodeIndex src = 0;
    NodeIndex dst = 0;
    std::uint64_t seq = 0;
};
using NodeEffect = std::variant<LinkTransmit, Deliver, SetTimer, CancelTimer, Drop>;
using Effects = std::vector<NodeEffect>;

struct SendOptions {
    std::uint8_t priority = 0;
    /// Absolute virtual-time deadline (PRIORITY). Defaults to now + factor x best latency.
    std::optional<double> deadline_ms;
};

/// Sliding window of seen sequence numbers for one (src, dst, service, kind)
/// stream. Tracks the highest attempt seen per seq.
class SeqWindow {
  public:
    explicit SeqWindow(std::size_t width) : width_(width) {}
    /// True if (seq, attempt) is new. Seqs older than the window count as seen.
    bool observe(std::uint64_t seq, std::uint32_t attempt = 0);
    std::size_t length() const { return marks_.size(); }

  private:
    std::size_t width_;
    std::uint64_t base_ = 0;
    std::deque<std::uint32_t> marks_;  // 0 = unseen, else attempt + 1
};

struct NodeStats {
    std::uint64_t originated = 0;
    std::uint64_t forwarded = 0;
    std::uint64_t delivered = 0;
    std::uint64_t hop_retransmits = 0;
    std::uint64_t nacks_sent = 0;
    std::uint64_t probes_sent = 0;
    std::uint64_t rel_retransmits = 0;
    std::map<DropReason, std::uint64_t> drops;
};

/// Per-node overlay state machine. Single-threaded; all interaction with the
/// outside world happens through the returned effects. Link transmissions are
/// paced by the caller: after a LinkTransmit the link is busy until
/// on_link_idle() is called for that neighbor.
class NodeState {
  public:
    NodeState(NodeIndex self, TopologyView view, NodeConfig config = {});

    NodeIndex id() const { return self_; }
    const TopologyView& view() const { return view_; }
    const NodeConfig& config() const { return config_; }
    const NodeStats& stats() const { return stats_; }
    const Behavior& behavior() const { return behavior_; }
    void set_behavior(Behavior b) { behavior_ = b; }

    /// Throws NoPathError / PayloadTooLarge.
    Effects client_send(TimeMs now, NodeIndex dst, Payload payload, ServiceClass service,
                        SendOptions options = {});
    Effects handle_frame(TimeMs now, NodeIndex from, const FramePtr& frame);
    /// Decodes first; undecodable input yields Drop(Malformed).
    Effects handle_raw_frame(TimeMs now, NodeIndex from, std::span<const std::uint8_t> bytes);
    Effects handle_timer(TimeMs now, TimerId id);
    /// The link towards `neighbor` finished serialising; hand it the next frame.
    Effects on_link_idle(TimeMs now, NodeIndex neighbor);
    Effects recompute_routes(TimeMs now, TopologyView new_view);

    /// Cached route set for (dst, k); computes on miss. Throws NoPathError.
    const std::vector<IndexPath>& routes(NodeIndex dst, unsigned k);

    std::size_t queued(NodeIndex neighbor) const;
    std::size_t queued_from(NodeIndex neighbor, const BufferKey& key) const;
    std::size_t rel_outstanding() const { return rel_pending_.size(); }
    std::size_t parked() const { return parked_.size(); }
    std::size_t dedup_window_length(NodeIndex src, NodeIndex dst, ServiceKind kind) const;
    bool link_busy(NodeIndex neighbor) const;

  private:
    struct CacheEntry {
        std::uint64_t seq;
        FramePtr frame;
        TimeMs sent;
    };
    struct OutLink {
        explicit OutLink(std::size_t capacity) : sched(capacity) {}
        bool busy = false;
        std::deque<FramePtr> control;
        FairScheduler<FramePtr> sched;
        std::uint64_t next_seq = 1;
        std::deque<CacheEntry> cache;
        bool unprobed = false;
        bool probe_armed = false;
        bool cache_timer_armed = false;
    };
    struct InLink {
        std::uint64_t highest = 0;
        std::map<std::uint64_t, unsigned> missing;  // link seq -> nacks sent
        bool nack_armed = false;
    };
    struct RelPending {
        FramePtr frame;
        unsigned retries = 0;
        double rto_ms = 0.0;
        TimerId timer = 0;
    };
    struct StreamKey {
        NodeIndex src;
        NodeIndex dst;
        ServiceKind service;
        FrameKind kind;
        auto operator<=>(const StreamKey&) const = default;
    };

    enum class TimerKind { RelRetransmit, HopNack, Probe, CacheExpiry, Deferred };
    struct TimerInfo {
        TimerKind kind;
        NodeIndex node = 0;  // neighbor, or dst for RelRetransmit
        std::uint64_t seq = 0;
        FramePtr frame;      // Deferred
    };

    OutLink& out(NodeIndex n);
    InLink& in(NodeIndex n);
    TimerId arm(Effects& fx, double delay_ms, TimerInfo info);
    void drop(Effects& fx, DropReason r, const Frame* f = nullptr);

    void dispatch(TimeMs now, const FramePtr& msg, Effects& fx, bool throw_on_no_path);
    void enqueue_to(TimeMs now, NodeIndex neighbor, const FramePtr& msg, Effects& fx);
    void try_transmit(TimeMs now, NodeIndex neighbor, Effects& fx);
    void send_control(TimeMs now, NodeIndex neighbor, FramePtr frame, Effects& fx);
    void process_message(TimeMs now, NodeIndex from, const FramePtr& msg, Effects& fx, bool honest_only);
    void arrive_at_destination(TimeMs now, const FramePtr& msg, Effects& fx);
    void reroute(TimeMs now, const FramePtr& msg, Effects& fx);
    bool note_link_seq(NodeIndex from, std::uint64_t seq, Effects& fx);
    void mark_missing(NodeIndex from, std::uint64_t upto, Effects& fx);
    bool remaining_route_usable(const Frame& msg) const;
    double best_latency(NodeIndex dst);
    double link_latency(NodeIndex neighbor) const;

    NodeIndex self_;
    TopologyView view_;
    NodeConfig config_;
    Behavior behavior_;
    NodeStats stats_;

    std::map<std::pair<NodeIndex, unsigned>, std::vector<IndexPath>> route_cache_;
    std::map<std::pair<NodeIndex, ServiceKind>, std::uint64_t> next_seq_;
    std::map<StreamKey, SeqWindow> relay_windows_;
    std::map<StreamKey, SeqWindow> delivery_windows_;
    std::map<std::pair<NodeIndex, std::uint64_t>, RelPending> rel_pending_;
    std::vector<FramePtr> parked_;
    std::vector<std::optional<OutLink>> out_;
    std::vector<std::optional<InLink>> in_;
    std::unordered_map<TimerId, TimerInfo> timers_;
    TimerId next_timer_ = 1;
};

}  // namespace spon::overlay
