#include "spon/frame.hpp"

#include <bit>
#include <cstring>

namespace spon::overlay {

const char* to_string(ServiceKind kind) { return kind == ServiceKind::Priority ? "pri" : "rel"; }

namespace {

void put_u8(Bytes& b, std::uint8_t v) { b.push_back(v); }

void put_u32(Bytes& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_u64(Bytes& b, std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_id(Bytes& b, const Topology& topo, NodeIndex n) {
    const auto& s = topo.node(n).str();
    if (s.size() > 255) throw MalformedFrame("node id longer than 255 bytes");
    put_u8(b, static_cast<std::uint8_t>(s.size()));
    b.insert(b.end(), s.begin(), s.end());
}

std::uint64_t deadline_field(const Frame& f) {
    if (f.service.kind == ServiceKind::Reliable) return f.attempt;
    return std::bit_cast<std::uint64_t>(f.deadline_ms);
}

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

    std::uint8_t u8() {
        need(1);
        return b_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | b_[pos_++];
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | b_[pos_++];
        return v;
    }
    NodeIndex id(const Topology& topo) {
        std::size_t len = u8();
        need(len);
        std::string_view s(reinterpret_cast<const char*>(b_.data() + pos_), len);
        pos_ += len;
        auto n = topo.find(s);
        if (!n) throw MalformedFrame("unknown node id '" + std::string(s) + "'");
        return *n;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto out = b_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == b_.size(); }

  private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw MalformedFrame("truncated frame");
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::size_t body_size(const Topology& topo, const Frame& f) {
    switch (f.kind) {
        case FrameKind::HopData:
            return f.inner ? encoded_size(topo, *f.inner) : 0;
        case FrameKind::HopNack:
            return f.missing.empty() ? 0 : 4 + 8 * f.missing.size();
        default:
            return f.payload_size();
    }
}

}  // namespace

std::size_t encoded_size(const Topology& topo, const Frame& f) {
    std::size_t n = 4;  // version, kind, service, k
    n += 1 + topo.node(f.src).str().size();
    n += 1 + topo.node(f.dst).str().size();
    n += 8 + 1 + 8 + 1;
    for (const auto& r : f.routes) {
        n += 1;
        for (auto h : r) n += 1 + topo.node(h).str().size();
    }
    n += 4 + body_size(topo, f);
    return n;
}

Bytes encode_frame(const Topology& topo, const Frame& f) {
    Bytes b;
    b.reserve(encoded_size(topo, f));
    put_u8(b, kFrameVersion);
    put_u8(b, static_cast<std::uint8_t>(f.kind));
    put_u8(b, static_cast<std::uint8_t>(f.service.kind));
    put_u8(b, f.service.k);
    put_id(b, topo, f.src);
    put_id(b, topo, f.dst);
    put_u64(b, f.seq);
    put_u8(b, f.priority);
    put_u64(b, deadline_field(f));
    if (f.routes.size() > 255) throw MalformedFrame("more than 255 routes");
    put_u8(b, static_cast<std::uint8_t>(f.routes.size()));
    for (const auto& r : f.routes) {
        if (r.size() > 255) throw MalformedFrame("route longer than 255 hops");
        put_u8(b, static_cast<std::uint8_t>(r.size()));
        for (auto h : r) put_id(b, topo, h);
    }
    switch (f.kind) {
        case FrameKind::HopData: {
            if (!f.inner) throw MalformedFrame("hop-data frame without inner frame");
            Bytes inner = encode_frame(topo, *f.inner);
            put_u32(b, static_cast<std::uint32_t>(inner.size()));
            b.insert(b.end(), inner.begin(), inner.end());
            break;
        }
        case FrameKind::HopNack: {
            if (f.missing.empty()) {
                put_u32(b, 0);
            } else {
                put_u32(b, static_cast<std::uint32_t>(4 + 8 * f.missing.size()));
                put_u32(b, static_cast<std::uint32_t>(f.missing.size()));
                for (auto s : f.missing) put_u64(b, s);
            }
            break;
        }
        default:
            put_u32(b, static_cast<std::uint32_t>(f.payload_size()));
            if (f.payload) b.insert(b.end(), f.payload->begin(), f.payload->end());
    }
    return b;
}

Frame decode_frame(const Topology& topo, std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    Frame f;
    if (r.u8() != kFrameVersion) throw MalformedFrame("unsupported frame version");
    auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(FrameKind::HopNack)) throw MalformedFrame("unknown frame kind");
    f.kind = static_cast<FrameKind>(kind);
    auto svc = r.u8();
    if (svc > 1) throw MalformedFrame("unknown service");
    f.service.kind = static_cast<ServiceKind>(svc);
    f.service.k = r.u8();
    f.src = r.id(topo);
    f.dst = r.id(topo);
    f.seq = r.u64();
    f.priority = r.u8();
    auto dl = r.u64();
    if (f.service.kind == ServiceKind::Reliable) {
        if (dl > UINT32_MAX) throw MalformedFrame("attempt out of range");
        f.attempt = static_cast<std::uint32_t>(dl);
    } else {
        f.deadline_ms = std::bit_cast<double>(dl);
    }
    auto nroutes = r.u8();
    for (int i = 0; i < nroutes; ++i) {
        std::vector<NodeIndex> route(r.u8());
        for (auto& h : route) h = r.id(topo);
        f.routes.push_back(std::move(route));
    }
    auto len = r.u32();
    auto body = r.take(len);
    if (!r.done()) throw MalformedFrame("trailing bytes after payload");
    switch (f.kind) {
        case FrameKind::HopData:
            f.inner = std::make_shared<const Frame>(decode_frame(topo, body));
            break;
        case FrameKind::HopNack:
            if (!body.empty()) {
                Reader nr(body);
                auto count = nr.u32();
                for (std::uint32_t i = 0; i < count; ++i) f.missing.push_back(nr.u64());
                if (!nr.done()) throw MalformedFrame("trailing bytes in nack list");
                if (f.missing.empty()) throw MalformedFrame("empty nack list with non-empty body");
            }
            break;
        default:
            f.payload = std::make_shared<const Bytes>(body.begin(), body.end());
    }
    return f;
}

}  // namespace spon::overlay
