#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spon::payment {

using Amount = std::int64_t;
using Hash32 = std::array<std::uint8_t, 32>;
using Bytes = std::vector<std::uint8_t>;

Hash32 sha256(std::span<const std::uint8_t> data);
std::string to_hex(const Hash32& h);

/// Receiver-side preimage for (payment_id, seq): SHA-256(secret || id || seq).
Hash32 make_preimage(const std::string& secret, std::uint64_t payment_id, std::uint32_t seq);
inline Hash32 make_condition(const Hash32& preimage) { return sha256(preimage); }

enum class PacketKind : std::uint8_t { Prepare = 12, Fulfill = 13, Reject = 14 };

enum class RejectCode : std::uint8_t {
    NoRoute = 0,
    Expired = 1,
    Insufficient = 2,
    LinkDown = 3,
    /// Fulfillment did not hash to the condition.
    BadFulfillment = 4,
};

const char* to_string(PacketKind k);
const char* to_string(RejectCode c);

struct IlpPacket {
    PacketKind kind = PacketKind::Prepare;
    std::uint64_t payment_id = 0;
    std::uint32_t seq = 0;
    // Prepare
    std::string dst_address;
    Amount amount = 0;
    Hash32 condition{};
    double expiry_ms = 0.0;
    // Fulfill
    Hash32 fulfillment{};
    // Reject
    RejectCode code = RejectCode::NoRoute;

    static IlpPacket prepare(std::uint64_t pid, std::uint32_t seq, std::string dst, Amount amount,
                             const Hash32& condition, double expiry_ms);
    static IlpPacket fulfill(std::uint64_t pid, std::uint32_t seq, const Hash32& fulfillment);
    static IlpPacket reject(std::uint64_t pid, std::uint32_t seq, RejectCode code);

    bool operator==(const IlpPacket&) const = default;
};

class MalformedPacket : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// kind(1) | payment_id(8) | seq(4) | body, big-endian
//   prepare: amount(8) | expiry(8, IEEE-754 bits) | condition(32) | addr-len(1) + addr
//   fulfill: fulfillment(32)
//   reject:  code(1)
Bytes encode_packet(const IlpPacket& p);
IlpPacket decode_packet(std::span<const std::uint8_t> bytes);

/// "g.b" matches "g.b" and "g.b.bob", not "g.bx".
bool address_has_prefix(const std::string& address, const std::string& prefix);

}  // namespace spon::payment
