#include "doctest.h"
#include "fuzz.hpp"
#include "tilert/task_queue.hpp"

TEST_CASE("queue is FIFO on one thread") {
    tilert::GlobalTaskQueue q(2);
    for (std::uint32_t i = 0; i < 100; ++i) q.push(i);
    CHECK(q.size() == 100);
    for (std::uint32_t i = 0; i < 100; ++i) CHECK(q.pop() == i);
    CHECK(q.empty());
    CHECK_FALSE(q.pop().has_value());
}

TEST_CASE("concurrent producers and consumers lose nothing") {
    const auto rep = fuzz::queue_stress(1, 4, 4, 50000);
    INFO(rep.first);
    CHECK(rep.violations == 0);
}
