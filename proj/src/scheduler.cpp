#include "tilert/scheduler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <utility>

#include "tilert/errors.hpp"
#include "tilert/task_queue.hpp"

namespace tilert {

std::string_view to_string(ExecutionMode m) noexcept {
    return m == ExecutionMode::deterministic ? "deterministic" : "concurrent";
}

int task_priority(const Task& task, DeviceId device, const TileCache& cache) {
    int score = 0;
    for (const auto& s : task.steps) {
        score += static_cast<int>(cache.residency(device, s.a.host_key));
        if (s.b) score += static_cast<int>(cache.residency(device, s.b->host_key));
    }
    return score;
}

std::size_t ReservationStation::pending() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(slots_.begin(), slots_.end(), [](const Slot& s) { return s.stream < 0; }));
}

ReservationStation::Slot* ReservationStation::find(TaskId task) {
    auto it = std::find_if(slots_.begin(), slots_.end(), [&](const Slot& s) { return s.task == task; });
    return it == slots_.end() ? nullptr : &*it;
}

void ReservationStation::add(TaskId task, int priority) {
    if (full()) throw InternalError("reservation station overflow on device " + std::to_string(device_));
    if (find(task)) throw InternalError("task " + std::to_string(task) + " already reserved");
    slots_.push_back(Slot{task, priority, -1});
}

void ReservationStation::remove(TaskId task) {
    auto it = std::find_if(slots_.begin(), slots_.end(), [&](const Slot& s) { return s.task == task; });
    if (it == slots_.end()) throw InternalError("task " + std::to_string(task) + " not reserved");
    slots_.erase(it);
}

void ReservationStation::set_priority(TaskId task, int priority) {
    Slot* s = find(task);
    if (!s) throw InternalError("task " + std::to_string(task) + " not reserved");
    s->priority = priority;
}

void ReservationStation::assign_stream(TaskId task, int stream) {
    Slot* s = find(task);
    if (!s) throw InternalError("task " + std::to_string(task) + " not reserved");
    for (const auto& other : slots_) {
        if (stream >= 0 && other.stream == stream && other.task != task) {
            throw InternalError("stream " + std::to_string(stream) + " already in use");
        }
    }
    s->stream = stream;
}

std::vector<TaskId> ReservationStation::ranked_pending() const {
    std::vector<Slot> pend;
    for (const auto& s : slots_) {
        if (s.stream < 0) pend.push_back(s);
    }
    std::sort(pend.begin(), pend.end(), [](const Slot& a, const Slot& b) {
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.task < b.task;
    });
    std::vector<TaskId> ids;
    ids.reserve(pend.size());
    for (const auto& s : pend) ids.push_back(s.task);
    return ids;
}

std::optional<TaskId> ReservationStation::take_lowest() {
    auto ranked = ranked_pending();
    if (ranked.empty()) return std::nullopt;
    remove(ranked.back());
    return ranked.back();
}

std::size_t refill_from_queue(ReservationStation& rs, GlobalTaskQueue& queue) {
    std::lock_guard lock(rs.mutex());
    std::size_t moved = 0;
    while (!rs.full()) {
        auto id = queue.pop();
        if (!id) break;
        rs.add(*id);
        ++moved;
    }
    return moved;
}

std::optional<TaskId> steal_task(const std::vector<ReservationStation*>& stations, DeviceId thief) {
    ReservationStation* victim = nullptr;
    std::size_t most = 1;
    for (ReservationStation* rs : stations) {
        if (rs->device() == thief) continue;
        std::lock_guard lock(rs->mutex());
        const std::size_t p = rs->pending();
        if (p > most || (p == most && victim && p > 1 && rs->device() < victim->device())) {
            most = p;
            victim = rs;
        }
    }
    if (!victim) return std::nullopt;
    std::lock_guard lock(victim->mutex());
    if (victim->pending() <= 1) return std::nullopt;
    return victim->take_lowest();
}

namespace {

constexpr double never = std::numeric_limits<double>::infinity();

struct Lane {
    bool active = false;
    TaskId task = 0;
    std::size_t next_step = 0;
    std::size_t out_offset = 0;
    std::span<double> out;
    double out_ready = 0.0;
};

// Device resources an issued step holds until the next synchronization.
struct Held {
    std::vector<TileKey> readers;
    std::vector<std::size_t> frees;
};

struct Worker {
    DeviceDesc desc;
    std::unique_ptr<ReservationStation> rs;
    Held held;
    double now = 0.0;
    std::uint64_t tasks_completed = 0;
    std::size_t max_lanes = 0;

    bool accelerator() const { return desc.kind == DeviceKind::accelerator; }
};

struct Fetched {
    TranslateResult a;
    std::optional<TranslateResult> b;
};

class Runtime {
public:
    Runtime(const RoutinePlan& plan, const Topology& topology, const RunOptions& options);

    RunResult run();

private:
    std::optional<double> iteration(Worker& w, double t);
    std::optional<double> accelerator_iteration(Worker& w, double t);
    std::optional<double> host_iteration(Worker& w, double t);

    void refill(Worker& w);
    std::optional<TaskId> steal(Worker& thief);
    void refresh_priorities(Worker& w);
    std::optional<TaskId> promote(Worker& w, int stream);

    bool issue_step(Worker& w, Lane& lane, std::size_t stream, double& issue_time);
    Fetched fetch_inputs(Worker& w, const Task& task, const Step& step, std::size_t stream, double& issue_time);
    std::optional<TranslateResult> fetch_one(Worker& w, const Task& task, const TileRef& ref, std::size_t stream,
                                             double issue_time, TraceTag tag);
    void hold(Worker& w, const TileRef& ref, const TranslateResult& r);
    void undo(Worker& w, const TileRef& ref, const TranslateResult& r);
    void verify_tile(const TileRef& ref, std::span<const double> got) const;

    double sync_point(Worker& w, double issue_time);
    void release_held(Worker& w);
    void complete(Worker& w, const Task& task, double when);
    bool stealable_work() const;

    void run_deterministic();
    void run_concurrent();
    RunResult collect();

    const RoutinePlan& plan_;
    const std::vector<Task>& tasks_;
    Topology topology_;
    RunOptions options_;
    SimClock clock_;
    TileCache cache_;
    GlobalTaskQueue queue_;
    std::vector<Worker> workers_;

    std::unique_ptr<std::atomic<std::uint32_t>[]> deps_;
    std::unique_ptr<std::atomic<std::uint32_t>[]> completions_;
    std::vector<double> release_time_;
    std::vector<DeviceId> executed_by_;
    std::vector<double> finished_at_;
    std::atomic<std::size_t> completed_{0};
    std::atomic<std::uint64_t> steals_{0};

    // Deterministic mode only: dependents waiting for their release time.
    using Release = std::pair<double, TaskId>;
    std::priority_queue<Release, std::vector<Release>, std::greater<>> releases_;
};

Runtime::Runtime(const RoutinePlan& plan, const Topology& topology, const RunOptions& options)
    : plan_(plan),
      tasks_(plan.tasks()),
      topology_(topology),
      options_(options),
      clock_(topology, options.record_trace),
      cache_(topology, CacheOptions{options.l1_enabled, options.l2_enabled}),
      queue_(std::max<std::size_t>(plan.tasks().size(), 16)) {
    if (options_.rs_capacity == 0) throw InvalidArgument("reservation station capacity must be positive");
    const std::size_t t = plan_.call().output().tile_size;
    const std::size_t tile_bytes = t * t * sizeof(double);
    std::vector<const DeviceDesc*> sorted;
    for (const auto& d : topology_.devices) sorted.push_back(&d);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const DeviceDesc* d : sorted) {
        if (d->kind == DeviceKind::accelerator) {
            if (d->arena_capacity <= streams_per_accelerator * 3 * tile_bytes) {
                throw InvalidTopology("arena of device " + std::to_string(d->id) + " (" +
                                      std::to_string(d->arena_capacity) +
                                      " bytes) cannot hold 4 concurrent tasks' tiles at tile size " +
                                      std::to_string(t));
            }
        } else if (d->speed == 0.0) {
            continue;
        }
        Worker w;
        w.desc = *d;
        if (w.accelerator()) w.rs = std::make_unique<ReservationStation>(d->id, options_.rs_capacity);
        workers_.push_back(std::move(w));
    }
    if (workers_.empty()) throw InvalidTopology("topology has no device able to run tasks");

    const std::size_t n = tasks_.size();
    deps_ = std::make_unique<std::atomic<std::uint32_t>[]>(n);
    completions_ = std::make_unique<std::atomic<std::uint32_t>[]>(n);
    release_time_.assign(n, 0.0);
    executed_by_.assign(n, host_endpoint);
    finished_at_.assign(n, 0.0);
    for (const auto& task : tasks_) {
        deps_[task.id].store(task.deps_remaining);
        completions_[task.id].store(0);
    }
    for (const auto& task : tasks_) {
        if (task.deps_remaining == 0) queue_.push(task.id);
    }
}

void Runtime::refresh_priorities(Worker& w) {
    for (const auto& slot : w.rs->slots()) {
        w.rs->set_priority(slot.task, task_priority(tasks_[slot.task], w.desc.id, cache_));
    }
}

std::optional<TaskId> Runtime::steal(Worker& thief) {
    std::vector<ReservationStation*> stations;
    for (auto& w : workers_) {
        if (w.rs) stations.push_back(w.rs.get());
    }
    auto taken = steal_task(stations, thief.desc.id);
    if (taken) steals_.fetch_add(1, std::memory_order_relaxed);
    return taken;
}

void Runtime::refill(Worker& w) {
    refill_from_queue(*w.rs, queue_);
    bool empty = false;
    {
        std::lock_guard lock(w.rs->mutex());
        empty = w.rs->size() == 0;
    }
    if (empty) {
        if (auto id = steal(w)) {
            std::lock_guard lock(w.rs->mutex());
            w.rs->add(*id);
        }
    }
}

std::optional<TaskId> Runtime::promote(Worker& w, int stream) {
    std::lock_guard lock(w.rs->mutex());
    refresh_priorities(w);
    auto ranked = w.rs->ranked_pending();
    if (ranked.empty()) return std::nullopt;
    w.rs->assign_stream(ranked.front(), stream);
    return ranked.front();
}

void Runtime::release_held(Worker& w) {
    for (const auto& key : w.held.readers) cache_.reader_release(w.desc.id, key);
    for (std::size_t off : w.held.frees) cache_.free_segment(w.desc.id, off);
    w.held = Held{};
}

double Runtime::sync_point(Worker& w, double issue_time) {
    const double t = clock_.synchronize(w.desc.id, issue_time);
    release_held(w);
    if (options_.check_coherence) cache_.check_consistency();
    return t;
}

void Runtime::complete(Worker& w, const Task& task, double when) {
    completions_[task.id].fetch_add(1, std::memory_order_acq_rel);
    executed_by_[task.id] = w.desc.id;
    finished_at_[task.id] = when;
    ++w.tasks_completed;
    for (TaskId dep : task.dependents) {
        if (deps_[dep].fetch_sub(1, std::memory_order_acq_rel) == 1) {
            release_time_[dep] = when;
            if (options_.mode == ExecutionMode::deterministic) {
                releases_.push({when, dep});
            } else {
                queue_.push(dep);
            }
        }
    }
    completed_.fetch_add(1, std::memory_order_acq_rel);
}

void Runtime::verify_tile(const TileRef& ref, std::span<const double> got) const {
    std::vector<double> want(ref.elements());
    tile_host_copy_in(plan_.matrix(ref.matrix_id), ref, want);
    if (!std::equal(want.begin(), want.end(), got.begin(), got.end())) {
        throw InternalError("tile delivered to a kernel differs from the host copy");
    }
}

void Runtime::hold(Worker& w, const TileRef& ref, const TranslateResult& r) {
    if (r.scratch) {
        w.held.frees.push_back(r.offset);
    } else {
        w.held.readers.push_back(ref.host_key);
    }
}

void Runtime::undo(Worker& w, const TileRef& ref, const TranslateResult& r) {
    if (r.scratch) {
        cache_.free_segment(w.desc.id, r.offset);
    } else {
        cache_.reader_release(w.desc.id, ref.host_key);
    }
}

std::optional<TranslateResult> Runtime::fetch_one(Worker& w, const Task& task, const TileRef& ref,
                                                  std::size_t stream, double issue_time, TraceTag tag) {
    const DeviceId id = w.desc.id;
    const double floor_t = std::max(issue_time, release_time_[task.id]);
    auto fetch = [&](const FetchRequest& req) {
        const double earliest = std::max(floor_t, req.not_before);
        if (req.outcome == FetchOutcome::host_fetch) {
            tile_host_copy_in(plan_.matrix(ref.matrix_id), ref, req.buffer);
            return clock_.schedule_transfer(host_endpoint, id, req.bytes, stream, earliest, tag);
        }
        return clock_.schedule_transfer(*req.source, id, req.bytes, stream, std::max(earliest, req.source_ready),
                                        tag);
    };
    auto r = cache_.translate(id, ref.host_key, ref.bytes(), fetch);
    if (!r.ok) return std::nullopt;
    return r;
}

Fetched Runtime::fetch_inputs(Worker& w, const Task& task, const Step& step, std::size_t stream,
                              double& issue_time) {
    const TraceTag tag{static_cast<std::int64_t>(task.id), static_cast<std::int64_t>(step.k)};
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1) issue_time = sync_point(w, issue_time);
        auto a = fetch_one(w, task, step.a, stream, issue_time, tag);
        if (!a) continue;
        std::optional<TranslateResult> b;
        if (step.b) {
            b = fetch_one(w, task, *step.b, stream, issue_time, tag);
            if (!b) {
                undo(w, step.a, *a);
                continue;
            }
        }
        hold(w, step.a, *a);
        if (b) hold(w, *step.b, *b);
        return Fetched{*a, b};
    }
    throw CapacityDeadlock("device " + std::to_string(w.desc.id) +
                           ": every cached tile is pinned even after synchronizing; the arena cannot hold the "
                           "working sets of 4 concurrent tasks at this tile size");
}

bool Runtime::issue_step(Worker& w, Lane& lane, std::size_t stream, double& issue_time) {
    const Task& task = tasks_[lane.task];
    const Step& step = task.steps[lane.next_step];
    const DeviceId id = w.desc.id;
    const TraceTag tag{static_cast<std::int64_t>(task.id), static_cast<std::int64_t>(step.k)};
    const auto& out_tm = plan_.matrix(task.output.matrix_id);

    if (lane.next_step == 0) {
        auto off = cache_.allocate_output(id, task.output.bytes());
        if (!off) {
            issue_time = sync_point(w, issue_time);
            off = cache_.allocate_output(id, task.output.bytes());
            if (!off) {
                throw CapacityDeadlock("device " + std::to_string(id) +
                                       ": no arena space for an output tile even after synchronizing");
            }
        }
        lane.out_offset = *off;
        lane.out = cache_.buffer(id, *off);
        lane.out_ready = cache_.reuse_floor(id);
        if (task.load_output) {
            tile_host_copy_in(out_tm, task.output, lane.out);
            lane.out_ready =
                clock_.schedule_transfer(host_endpoint, id, task.output.bytes(), stream,
                                         std::max({issue_time, release_time_[task.id], lane.out_ready}), tag);
        }
    }

    const Fetched in = fetch_inputs(w, task, step, stream, issue_time);
    if (options_.verify_tiles) {
        verify_tile(step.a, in.a.buffer);
        if (in.b) verify_tile(*step.b, in.b->buffer);
    }
    execute_step(task, step, TileView{lane.out, task.output.height, task.output.width}, in.a.buffer,
                 in.b ? std::span<const double>(in.b->buffer) : std::span<const double>());
    double earliest = std::max({issue_time, release_time_[task.id], in.a.ready_time, lane.out_ready});
    if (in.b) earliest = std::max(earliest, in.b->ready_time);
    clock_.schedule_kernel(id, step.flops, stream, earliest, tag);

    if (++lane.next_step < task.steps.size()) return false;

    tile_host_copy_out(out_tm, task.output, lane.out);
    const double done = clock_.schedule_transfer(id, host_endpoint, task.output.bytes(), stream,
                                                 std::max(issue_time, release_time_[task.id]), tag);
    cache_.output_write_back(task.output.host_key);
    w.held.frees.push_back(lane.out_offset);
    {
        std::lock_guard lock(w.rs->mutex());
        w.rs->remove(task.id);
    }
    complete(w, task, done);
    lane.active = false;
    return true;
}

std::optional<double> Runtime::accelerator_iteration(Worker& w, double t) {
    release_held(w);
    if (options_.check_coherence) cache_.check_consistency();
    refill(w);

    const std::size_t streams = clock_.stream_count(w.desc.id);
    std::vector<Lane> lanes(streams);
    {
        std::lock_guard lock(w.rs->mutex());
        if (w.rs->size() == 0) return std::nullopt;
        refresh_priorities(w);
        const auto ranked = w.rs->ranked_pending();
        for (std::size_t s = 0; s < streams && s < ranked.size(); ++s) {
            w.rs->assign_stream(ranked[s], static_cast<int>(s));
            lanes[s].active = true;
            lanes[s].task = ranked[s];
        }
    }

    double issue_time = t;
    for (;;) {
        std::size_t active = 0;
        for (std::size_t s = 0; s < streams; ++s) {
            if (lanes[s].active) ++active;
        }
        w.max_lanes = std::max(w.max_lanes, active);
        if (active == 0) break;

        for (std::size_t s = 0; s < streams; ++s) {
            if (lanes[s].active) issue_step(w, lanes[s], s, issue_time);
        }

        const bool running = std::any_of(lanes.begin(), lanes.end(), [](const Lane& l) { return l.active; });
        if (!running) break;
        for (std::size_t s = 0; s < streams; ++s) {
            if (lanes[s].active) continue;
            if (auto next = promote(w, static_cast<int>(s))) {
                lanes[s] = Lane{};
                lanes[s].active = true;
                lanes[s].task = *next;
            }
        }
    }
    return clock_.synchronize(w.desc.id, issue_time);
}

std::optional<double> Runtime::host_iteration(Worker& w, double t) {
    auto id = queue_.pop();
    if (!id) id = steal(w);
    if (!id) return std::nullopt;
    const Task& task = tasks_[*id];
    execute_task_on_host(plan_, task);
    const double start = std::max(t, release_time_[task.id]);
    for (const auto& s : task.steps) {
        clock_.schedule_kernel(w.desc.id, s.flops, 0, start,
                               TraceTag{static_cast<std::int64_t>(task.id), static_cast<std::int64_t>(s.k)});
    }
    const double end = std::max(start, clock_.stream_done(w.desc.id, 0));
    complete(w, task, end);
    return end;
}

std::optional<double> Runtime::iteration(Worker& w, double t) {
    return w.accelerator() ? accelerator_iteration(w, t) : host_iteration(w, t);
}

bool Runtime::stealable_work() const {
    if (!queue_.empty()) return true;
    for (const auto& w : workers_) {
        if (w.rs && w.rs->pending() > 1) return true;
    }
    return false;
}

void Runtime::run_deterministic() {
    using Event = std::pair<double, std::size_t>;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    for (std::size_t i = 0; i < workers_.size(); ++i) events.push({0.0, i});
    std::set<std::size_t> parked;

    auto wake_parked = [&](double t) {
        for (std::size_t i : parked) events.push({t, i});
        parked.clear();
    };
    auto admit_releases = [&](double t) {
        bool any = false;
        while (!releases_.empty() && releases_.top().first <= t) {
            queue_.push(releases_.top().second);
            releases_.pop();
            any = true;
        }
        return any;
    };

    while (completed_.load() < tasks_.size()) {
        const double next_release = releases_.empty() ? never : releases_.top().first;
        if (events.empty() && next_release == never) {
            throw InternalError("scheduler stalled with " + std::to_string(tasks_.size() - completed_.load()) +
                                " tasks outstanding");
        }
        if (events.empty() || next_release < events.top().first) {
            admit_releases(next_release);
            wake_parked(next_release);
            continue;
        }
        const auto [t, idx] = events.top();
        events.pop();
        if (admit_releases(t)) wake_parked(t);

        Worker& w = workers_[idx];
        w.now = t;
        if (auto next = iteration(w, t)) {
            events.push({*next, idx});
        } else {
            parked.insert(idx);
        }
        if (!parked.empty() && stealable_work()) wake_parked(t);
    }
    for (auto& w : workers_) {
        if (w.accelerator()) release_held(w);
    }
}

void Runtime::run_concurrent() {
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(workers_.size());
    for (auto& w : workers_) {
        threads.emplace_back([&, wp = &w] {
            Worker& me = *wp;
            try {
                std::size_t idle = 0;
                while (!abort.load() && completed_.load() < tasks_.size()) {
                    if (auto next = iteration(me, me.now)) {
                        me.now = std::max(me.now, *next);
                        idle = 0;
                    } else if (++idle < 64) {
                        std::this_thread::yield();
                    } else {
                        std::this_thread::sleep_for(std::chrono::microseconds(50));
                    }
                }
                if (me.accelerator()) release_held(me);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                abort.store(true);
            }
        });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

RunResult Runtime::collect() {
    RunResult r;
    r.metrics = clock_.finalize();
    for (auto& dm : r.metrics.devices) {
        for (const auto& w : workers_) {
            if (w.desc.id != dm.device_id) continue;
            dm.tasks_completed = w.tasks_completed;
            r.max_lanes_in_flight = std::max(r.max_lanes_in_flight, w.max_lanes);
        }
        if (topology_.device(dm.device_id).kind == DeviceKind::accelerator) {
            const auto c = cache_.counters(dm.device_id);
            dm.l1_hits = c.l1_hits;
            dm.l2_hits = c.l2_hits;
            dm.host_fetches = c.host_fetches;
            dm.evictions = c.evictions;
            dm.arena_reservations = cache_.arena_reservations(dm.device_id);
        }
        r.metrics.l1_hits += dm.l1_hits;
        r.metrics.l2_hits += dm.l2_hits;
        r.metrics.host_fetches += dm.host_fetches;
    }
    if (options_.record_trace) r.trace = clock_.trace();
    r.executed_by = executed_by_;
    r.finished_at = finished_at_;
    r.completions.resize(tasks_.size());
    for (std::size_t i = 0; i < tasks_.size(); ++i) r.completions[i] = completions_[i].load();
    r.steals = steals_.load();
    r.directory_transitions = cache_.directory_transitions();
    return r;
}

RunResult Runtime::run() {
    if (options_.mode == ExecutionMode::deterministic) {
        run_deterministic();
    } else {
        run_concurrent();
    }
    cache_.check_consistency();
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
        if (completions_[i].load() != 1) {
            throw InternalError("task " + std::to_string(i) + " completed " +
                                std::to_string(completions_[i].load()) + " times");
        }
    }
    return collect();
}

}  // namespace

RunResult run_plan(const RoutinePlan& plan, const Topology& topology, const RunOptions& options) {
    topology.validate();
    Runtime rt(plan, topology, options);
    return rt.run();
}

Metrics run_call(const RoutineCall& call, const Topology& topology, const RunOptions& options) {
    const RoutinePlan plan(call);
    return run_plan(plan, topology, options).metrics;
}

}  // namespace tilert
