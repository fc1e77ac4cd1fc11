#include "spon/ilp.hpp"

#include <openssl/sha.h>

#include <bit>

namespace spon::payment {

Hash32 sha256(std::span<const std::uint8_t> data) {
    Hash32 out{};
    if (!SHA256(data.data(), data.size(), out.data())) throw std::runtime_error("sha256 failed");
    return out;
}

std::string to_hex(const Hash32& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : h) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 15]);
    }
    return s;
}

namespace {

void put_be(Bytes& b, std::uint64_t v, int bytes) {
    for (int s = 8 * (bytes - 1); s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

struct Cursor {
    std::span<const std::uint8_t> b;
    std::size_t pos = 0;

    std::uint64_t be(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v = (v << 8) | b[pos++];
        return v;
    }
    Hash32 hash() {
        need(32);
        Hash32 h;
        std::copy(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + 32),
                  h.begin());
        pos += 32;
        return h;
    }
    void need(std::size_t n) const {
        if (b.size() - pos < n) throw MalformedPacket("truncated ILP packet");
    }
};

}  // namespace

Hash32 make_preimage(const std::string& secret, std::uint64_t payment_id, std::uint32_t seq) {
    Bytes b(secret.begin(), secret.end());
    put_be(b, payment_id, 8);
    put_be(b, seq, 4);
    return sha256(b);
}

const char* to_string(PacketKind k) {
    switch (k) {
        case PacketKind::Prepare: return "prepare";
        case PacketKind::Fulfill: return "fulfill";
        case PacketKind::Reject: return "reject";
    }
    return "?";
}

const char* to_string(RejectCode c) {
    switch (c) {
        case RejectCode::NoRoute: return "NO_ROUTE";
        case RejectCode::Expired: return "EXPIRED";
        case RejectCode::Insufficient: return "INSUFFICIENT";
        case RejectCode::LinkDown: return "LINK_DOWN";
        case RejectCode::BadFulfillment: return "BAD_FULFILLMENT";
    }
    return "?";
}

IlpPacket IlpPacket::prepare(std::uint64_t pid, std::uint32_t seq, std::string dst, Amount amount,
                             const Hash32& condition, double expiry_ms) {
    IlpPacket p;
    p.kind = PacketKind::Prepare;
    p.payment_id = pid;
    p.seq = seq;
    p.dst_address = std::move(dst);
    p.amount = amount;
    p.condition = condition;
    p.expiry_ms = expiry_ms;
    return p;
}

IlpPacket IlpPacket::fulfill(std::uint64_t pid, std::uint32_t seq, const Hash32& fulfillment) {
    IlpPacket p;
    p.kind = PacketKind::Fulfill;
    p.payment_id = pid;
    p.seq = seq;
    p.fulfillment = fulfillment;
    return p;
}

IlpPacket IlpPacket::reject(std::uint64_t pid, std::uint32_t seq, RejectCode code) {
    IlpPacket p;
    p.kind = PacketKind::Reject;
    p.payment_id = pid;
    p.seq = seq;
    p.code = code;
    return p;
}

Bytes encode_packet(const IlpPacket& p) {
    Bytes b;
    b.reserve(64 + p.dst_address.size());
    b.push_back(static_cast<std::uint8_t>(p.kind));
    put_be(b, p.payment_id, 8);
    put_be(b, p.seq, 4);
    switch (p.kind) {
        case PacketKind::Prepare:
            if (p.dst_address.size() > 255) throw MalformedPacket("address longer than 255 bytes");
            put_be(b, static_cast<std::uint64_t>(p.amount), 8);
            put_be(b, std::bit_cast<std::uint64_t>(p.expiry_ms), 8);
            b.insert(b.end(), p.condition.begin(), p.condition.end());
            b.push_back(static_cast<std::uint8_t>(p.dst_address.size()));
            b.insert(b.end(), p.dst_address.begin(), p.dst_address.end());
            break;
        case PacketKind::Fulfill:
            b.insert(b.end(), p.fulfillment.begin(), p.fulfillment.end());
            break;
        case PacketKind::Reject:
            b.push_back(static_cast<std::uint8_t>(p.code));
            break;
    }
    return b;
}

IlpPacket decode_packet(std::span<const std::uint8_t> bytes) {
    Cursor c{bytes};
    IlpPacket p;
    auto kind = c.be(1);
    if (kind < 12 || kind > 14) throw MalformedPacket("unknown ILP packet kind");
    p.kind = static_cast<PacketKind>(kind);
    p.payment_id = c.be(8);
    p.seq = static_cast<std::uint32_t>(c.be(4));
    switch (p.kind) {
        case PacketKind::Prepare: {
            p.amount = static_cast<Amount>(c.be(8));
            if (p.amount < 0) throw MalformedPacket("negative amount");
            p.expiry_ms = std::bit_cast<double>(c.be(8));
            p.condition = c.hash();
            auto len = c.be(1);
            c.need(len);
            p.dst_address.assign(reinterpret_cast<const char*>(bytes.data() + c.pos), len);
            c.pos += len;
            break;
        }
        case PacketKind::Fulfill:
            p.fulfillment = c.hash();
            break;
        case PacketKind::Reject: {
            auto code = c.be(1);
            if (code > static_cast<std::uint8_t>(RejectCode::BadFulfillment)) throw MalformedPacket("unknown reject code");
            p.code = static_cast<RejectCode>(code);
            break;
        }
    }
    if (c.pos != bytes.size()) throw MalformedPacket("trailing bytes in ILP packet");
    return p;
}

bool address_has_prefix(const std::string& address, const std::string& prefix) {
    if (prefix.empty()) return true;
    if (address.size() < prefix.size() || address.compare(0, prefix.size(), prefix) != 0) return false;
    return address.size() == prefix.size() || address[prefix.size()] == '.';
}

}  // namespace spon::payment
