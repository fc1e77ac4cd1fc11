#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "spon/topology.hpp"

namespace spon::overlay {

using Bytes = std::vector<std::uint8_t>;
using Payload = std::shared_ptr<const Bytes>;

enum class ServiceKind : std::uint8_t { Priority = 0, Reliable = 1 };

/// k = 0 means flooding.
struct ServiceClass {
    ServiceKind kind = ServiceKind::Priority;
    std::uint8_t k = 0;

    bool flooding() const { return k == 0; }
    bool operator==(const ServiceClass&) const = default;
};

const char* to_string(ServiceKind kind);

enum class FrameKind : std::uint8_t { Data = 0, Ack = 1, Nack = 2, HopData = 3, HopNack = 4 };

inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr double kNoDeadline = std::numeric_limits<double>::infinity();

/// One overlay frame. Data/Ack frames are end-to-end messages; HopData wraps
/// one of them for a single overlay link (seq = link sequence number), and
/// HopNack carries link-level recovery control:
///   non-empty `missing`  -> receiver asks upstream to resend those link seqs
///   empty `missing`      -> upstream probe announcing its highest link seq (in seq)
struct Frame {
    FrameKind kind = FrameKind::Data;
    ServiceClass service;
    NodeIndex src = 0;
    NodeIndex dst = 0;
    std::uint64_t seq = 0;
    std::uint8_t priority = 0;
    /// PRIORITY only; kNoDeadline when unset.
    double deadline_ms = kNoDeadline;
    /// RELIABLE only: end-to-end transmission attempt (0 = first send).
    std::uint32_t attempt = 0;
    std::vector<std::vector<NodeIndex>> routes;
    Payload payload;
    /// HopData only.
    std::shared_ptr<const Frame> inner;
    /// HopNack only.
    std::vector<std::uint64_t> missing;

    bool flooded() const { return service.k == 0; }
    std::size_t payload_size() const { return payload ? payload->size() : 0; }
};

using FramePtr = std::shared_ptr<const Frame>;

class MalformedFrame : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Wire layout (big-endian):
//   version(1) | kind(1) | service(1) | k(1) | src-len(1)+src | dst-len(1)+dst |
//   seq(8) | priority(1) | deadline(8) | route-count(1) + routes | payload-len(4) + payload
// route = hop-count(1) + hop-count * (len(1)+id)
// deadline carries the IEEE-754 bits of the PRIORITY deadline, or the
// transmission attempt for RELIABLE frames.
// HopData payload = encoded inner frame; HopNack payload = count(4) + count * seq(8).
Bytes encode_frame(const Topology& topo, const Frame& f);
Frame decode_frame(const Topology& topo, std::span<const std::uint8_t> bytes);
/// Size encode_frame would produce, computed without encoding.
std::size_t encoded_size(const Topology& topo, const Frame& f);

}  // namespace spon::overlay
