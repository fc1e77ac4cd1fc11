#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "spon/frame.hpp"

namespace spon::overlay {

/// Buffer partition: one per source for PRIORITY, one per (source, destination)
/// flow for RELIABLE.
struct BufferKey {
    ServiceKind kind = ServiceKind::Priority;
    NodeIndex src = 0;
    NodeIndex dst = 0;

    static BufferKey for_message(const Frame& f) {
        if (f.service.kind == ServiceKind::Priority) return {ServiceKind::Priority, f.src, 0};
        return {ServiceKind::Reliable, f.src, f.dst};
    }
    auto operator<=>(const BufferKey&) const = default;
};

/// Round-robin over bounded per-partition buffers. Within a partition the
/// highest priority level goes first, FIFO among equals. A full partition
/// rejects its own arrivals and never evicts other partitions.
template <class Item>
class FairScheduler {
  public:
    explicit FairScheduler(std::size_t capacity) : capacity_(capacity) {}

    /// False when the partition is full and the item was dropped.
    bool enqueue(const BufferKey& key, std::uint8_t priority, Item item) {
        auto [it, inserted] = buffers_.try_emplace(key);
        Buffer& buf = it->second;
        if (buf.count >= capacity_) return false;
        if (buf.count == 0) ring_.push_back(key);
        buf.levels[priority].push_back(std::move(item));
        ++buf.count;
        ++total_;
        return true;
    }

    /// Next item in round-robin order. Items for which `expired` holds are
    /// removed and handed to `on_expired`; the same partition then offers its
    /// next candidate.
    template <class Expired, class OnExpired>
    std::optional<Item> dequeue(Expired&& expired, OnExpired&& on_expired) {
        while (!ring_.empty()) {
            BufferKey key = ring_.front();
            ring_.pop_front();
            auto it = buffers_.find(key);
            Buffer& buf = it->second;
            std::optional<Item> chosen;
            while (buf.count > 0 && !chosen) {
                auto level = buf.levels.begin();
                Item item = std::move(level->second.front());
                level->second.pop_front();
                if (level->second.empty()) buf.levels.erase(level);
                --buf.count;
                --total_;
                if (expired(item)) {
                    on_expired(std::move(item));
                } else {
                    chosen = std::move(item);
                }
            }
            if (buf.count > 0) {
                ring_.push_back(key);
            } else {
                buffers_.erase(it);
            }
            if (chosen) return chosen;
        }
        return std::nullopt;
    }

    std::optional<Item> dequeue() {
        return dequeue([](const Item&) { return false; }, [](Item&&) {});
    }

    /// Removes every item matching `pred`, preserving the order of the rest.
    template <class Pred>
    std::vector<Item> extract_if(Pred&& pred) {
        std::vector<Item> out;
        for (auto it = buffers_.begin(); it != buffers_.end();) {
            Buffer& buf = it->second;
            for (auto lv = buf.levels.begin(); lv != buf.levels.end();) {
                auto& q = lv->second;
                for (auto qi = q.begin(); qi != q.end();) {
                    if (pred(*qi)) {
                        out.push_back(std::move(*qi));
                        qi = q.erase(qi);
                        --buf.count;
                        --total_;
                    } else {
                        ++qi;
                    }
                }
                lv = q.empty() ? buf.levels.erase(lv) : std::next(lv);
            }
            if (buf.count == 0) {
                std::erase(ring_, it->first);
                it = buffers_.erase(it);
            } else {
                ++it;
            }
        }
        return out;
    }

    bool empty() const { return total_ == 0; }
    std::size_t size() const { return total_; }
    std::size_t partitions() const { return buffers_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t size_of(const BufferKey& key) const {
        auto it = buffers_.find(key);
        return it == buffers_.end() ? 0 : it->second.count;
    }

  private:
    struct Buffer {
        std::map<std::uint8_t, std::deque<Item>, std::greater<>> levels;
        std::size_t count = 0;
    };

    std::size_t capacity_;
    std::map<BufferKey, Buffer> buffers_;
    std::deque<BufferKey> ring_;
    std::size_t total_ = 0;
};

}  // namespace spon::overlay
