#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string_view>
#include <vector>

#include "tilert/cache.hpp"
#include "tilert/devices.hpp"
#include "tilert/routines.hpp"
#include "tilert/task_queue.hpp"

namespace tilert {

enum class ExecutionMode { deterministic, concurrent };

std::string_view to_string(ExecutionMode m) noexcept;

struct RunOptions {
    ExecutionMode mode = ExecutionMode::deterministic;
    bool l1_enabled = true;
    bool l2_enabled = true;
    std::size_t rs_capacity = 8;
    bool record_trace = false;
    /// Compare every input tile handed to a kernel with the host copy.
    bool verify_tiles = false;
    /// Run the cache consistency check at every synchronization point.
    bool check_coherence = false;
};

/// Sum over the task's steps of the residency score (2 local, 1 peer, 0 none)
/// of each input tile, as seen from `device`.
int task_priority(const Task& task, DeviceId device, const TileCache& cache);

/// Per-device buffer of upcoming tasks. A slot with a stream index is running
/// on that stream; the others are pending and may be stolen.
class ReservationStation {
public:
    struct Slot {
        TaskId task = 0;
        int priority = 0;
        int stream = -1;
    };

    ReservationStation(DeviceId device, std::size_t capacity) : device_(device), capacity_(capacity) {}

    DeviceId device() const noexcept { return device_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return slots_.size(); }
    bool full() const noexcept { return slots_.size() >= capacity_; }
    std::size_t pending() const noexcept;
    const std::vector<Slot>& slots() const noexcept { return slots_; }

    void add(TaskId task, int priority = 0);
    void remove(TaskId task);
    void set_priority(TaskId task, int priority);
    void assign_stream(TaskId task, int stream);

    /// Pending tasks ordered by priority (highest first), ties by smaller id.
    std::vector<TaskId> ranked_pending() const;

    /// Removes and returns the lowest-ranked pending task.
    std::optional<TaskId> take_lowest();

    std::mutex& mutex() const noexcept { return mutex_; }

private:
    Slot* find(TaskId task);

    DeviceId device_;
    std::size_t capacity_;
    std::vector<Slot> slots_;
    mutable std::mutex mutex_;
};

/// Fill the station's free slots from the queue; returns how many moved.
std::size_t refill_from_queue(ReservationStation& rs, GlobalTaskQueue& queue);

/// Take the lowest-ranked pending task of the station with the most pending
/// tasks (ties to the lowest device id), skipping the thief's own station.
/// Nothing is stolen from a station with one pending task or fewer.
std::optional<TaskId> steal_task(const std::vector<ReservationStation*>& stations, DeviceId thief);

/// Everything a run produced, for tests and tooling.
struct RunResult {
    Metrics metrics;
    std::vector<TraceRecord> trace;
    /// Device that completed each task.
    std::vector<DeviceId> executed_by;
    /// Simulated time each task's result reached the host.
    std::vector<double> finished_at;
    /// Completion count per task; exactly one everywhere after a good run.
    std::vector<std::uint32_t> completions;
    /// Most tasks one device ever had on streams at once.
    std::size_t max_lanes_in_flight = 0;
    std::uint64_t steals = 0;
    std::map<std::pair<MesiState, MesiState>, std::uint64_t> directory_transitions;
};

/// Run a planned call on the simulated fabric. Results land in host memory.
RunResult run_plan(const RoutinePlan& plan, const Topology& topology, const RunOptions& options = {});

/// Plan and run one call, returning its metrics.
Metrics run_call(const RoutineCall& call, const Topology& topology, const RunOptions& options = {});

}  // namespace tilert
