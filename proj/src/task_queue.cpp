#include "tilert/task_queue.hpp"

#include "tilert/errors.hpp"

namespace tilert {

void GlobalTaskQueue::push(std::uint32_t id) {
    size_.fetch_add(1, std::memory_order_acq_rel);
    if (!queue_.push(id)) {
        size_.fetch_sub(1, std::memory_order_acq_rel);
        throw InternalError("task queue could not allocate a node");
    }
}

std::optional<std::uint32_t> GlobalTaskQueue::pop() {
    std::uint32_t id = 0;
    if (!queue_.pop(id)) return std::nullopt;
    size_.fetch_sub(1, std::memory_order_acq_rel);
    return id;
}

}  // namespace tilert
