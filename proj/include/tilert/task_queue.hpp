#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>

#include <boost/lockfree/queue.hpp>

namespace tilert {

/// Multi-producer multi-consumer FIFO of task ids. Non-blocking on both ends;
/// every pushed id is popped exactly once.
class GlobalTaskQueue {
public:
    explicit GlobalTaskQueue(std::size_t initial_capacity = 1024) : queue_(initial_capacity) {}

    GlobalTaskQueue(const GlobalTaskQueue&) = delete;
    GlobalTaskQueue& operator=(const GlobalTaskQueue&) = delete;

    void push(std::uint32_t id);
    std::optional<std::uint32_t> pop();

    /// Approximate under concurrency; exact when quiescent.
    std::size_t size() const noexcept { return size_.load(std::memory_order_acquire); }
    bool empty() const noexcept { return size() == 0; }

private:
    boost::lockfree::queue<std::uint32_t> queue_;
    std::atomic<std::size_t> size_{0};
};

}  // namespace tilert
