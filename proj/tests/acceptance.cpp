// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <list>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fuzz.hpp"
#include "support.hpp"
#include "tilert/errors.hpp"
#include "tilert/routines.hpp"
#include "tilert/scheduler.hpp"

using namespace tilert;

namespace {

constexpr double numeric_tolerance = 1e-10;
constexpr double suite_seconds_limit = 120.0;
constexpr double volume_ratio_limit = 0.40;
constexpr double overlap_slack = 0.01;
constexpr double balance_gap_limit = 0.05;
constexpr double fast_task_ratio = 1.7;
constexpr double flop_fraction_floor = 0.90;

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// --- criterion 1 and 11: randomized correctness suite ---------------------

struct SuiteCase {
    ProblemSpec spec;
    Topology topology;
    std::uint64_t seed = 0;
};

std::vector<SuiteCase> correctness_cases() {
    const Routine routines[] = {Routine::gemm, Routine::syrk, Routine::trsm,
                                Routine::trmm, Routine::syr2k, Routine::symm};
    const std::size_t tiles[] = {16, 64, 100};
    std::mt19937_64 rng(20240601);
    std::uniform_int_distribution<std::size_t> dim(1, 512);
    std::uniform_real_distribution<double> speed(5e11, 2e12);
    std::vector<SuiteCase> cases;
    for (Routine r : routines) {
        for (int i = 0; i < 50; ++i) {
            SuiteCase c;
            auto& s = c.spec;
            s.routine = r;
            s.m = dim(rng);
            s.n = dim(rng);
            s.k = dim(rng);
            s.tile_size = tiles[rng() % 3];
            s.alpha = (rng() % 2) ? 1.0 : -0.6;
            s.beta = (rng() % 3 == 0) ? 0.0 : 0.8;
            s.trans_a = rng() % 2;
            s.trans_b = rng() % 2;
            s.uplo = rng() % 2 ? Uplo::upper : Uplo::lower;
            s.side = rng() % 2 ? Side::left : Side::right;
            s.diag = rng() % 2 ? Diag::unit : Diag::non_unit;

            const std::size_t accelerators = 1 + static_cast<std::size_t>(i % 4);
            const bool with_host = (i / 4) % 2 == 1;
            const std::size_t arena_tiles = 13 + rng() % 36;
            for (std::size_t d = 0; d < accelerators; ++d) {
                c.topology.devices.push_back(support::accelerator(
                    static_cast<DeviceId>(d), speed(rng), arena_tiles * support::tile_bytes(s.tile_size),
                    static_cast<std::uint32_t>(rng() % 2)));
            }
            if (with_host) c.topology.devices.push_back(support::host(100, 1e11));
            c.seed = rng();
            cases.push_back(std::move(c));
        }
    }
    return cases;
}

struct SuiteResult {
    double worst = 0.0;
    std::size_t failures = 0;
    double seconds = 0.0;
    std::string first;
};

SuiteResult run_suite(ExecutionMode mode) {
    SuiteResult out;
    const auto t0 = Clock::now();
    RunOptions opts;
    opts.mode = mode;
    for (const auto& c : correctness_cases()) {
        try {
            auto o = support::run_checked(Problem::random(c.spec, c.seed), c.topology, opts);
            out.worst = std::max(out.worst, o.error);
            bool once = std::all_of(o.result.completions.begin(), o.result.completions.end(),
                                    [](std::uint32_t n) { return n == 1; });
            if (!(o.error <= numeric_tolerance) || !once) {
                if (out.failures++ == 0) {
                    out.first = std::string(to_string(c.spec.routine)) + " error " + fmt("%.3g", o.error);
                }
            }
        } catch (const Error& e) {
            if (out.failures++ == 0) out.first = std::string(to_string(c.spec.routine)) + ": " + e.what();
        }
    }
    out.seconds = seconds_since(t0);
    return out;
}

Verdict criterion_1(const SuiteResult& det) {
    Verdict v;
    v.pass = det.failures == 0 && det.seconds <= suite_seconds_limit;
    v.detail = "300 cases, max rel error " + fmt("%.3g", det.worst) + ", " + fmt("%.1f", det.seconds) + " s";
    if (det.failures) v.detail += ", " + std::to_string(det.failures) + " failed (first: " + det.first + ")";
    return v;
}

// --- criterion 2 ------------------------------------------------------------

Verdict criterion_2() {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::size_t> dim(1, 4096);
    std::uniform_int_distribution<std::size_t> tile(16, 1024);
    std::size_t mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t m = dim(rng), n = dim(rng), t = tile(rng);
        std::size_t count = 0;
        for (std::size_t r = 0; r < m; r += t)
            for (std::size_t c = 0; c < n; c += t) ++count;
        if (count != degree_of_parallelism(m, n, t)) ++mismatches;
    }
    return {mismatches == 0, "1000 random shapes, " + std::to_string(mismatches) + " mismatches"};
}

// --- criterion 3 and 4: fuzz suites ----------------------------------------

Verdict criterion_3() {
    std::uint64_t violations = 0;
    std::string first;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rep = fuzz::cache_fuzz(seed, 100000);
        if (rep.violations && first.empty()) first = rep.first;
        violations += rep.violations;
    }
    Verdict v{violations == 0, "20 seeds x 1e5 ops, " + std::to_string(violations) + " violations"};
    if (!first.empty()) v.detail += " (first: " + first + ")";
    return v;
}

Verdict criterion_4() {
    auto rep = fuzz::arena_fuzz(4, 100000);
    std::uint64_t violations = rep.violations;
    // One reservation per device across a full multi-device run.
    Topology topo = support::accelerators(3, 16, 20);
    auto o = support::run_checked(Problem::random(support::gemm_spec(128, 16), 4), topo);
    std::size_t bad_devices = 0;
    for (const auto& d : o.result.metrics.devices)
        if (d.arena_reservations != 1) ++bad_devices;
    violations += bad_devices;
    Verdict v{violations == 0, "1e5 ops, " + std::to_string(rep.violations) + " invariant violations, " +
                                   std::to_string(bad_devices) + " devices with reservations != 1"};
    if (!rep.first.empty()) v.detail += " (first: " + rep.first + ")";
    return v;
}

// --- criterion 5: communication volume with an ALRU replay oracle -----------

// Replays the device's kernel issue order through a separate model of the
// tile cache: equal-size slots, an LRU list with reader counts, outputs that
// occupy a slot from their first step until the next synchronization, and
// readers released at every synchronization. Returns the predicted number of
// host fetches, or -1 if the model needs a synchronization that the run did
// not perform.
long long replay_host_fetches(const RoutinePlan& plan, const std::vector<TraceRecord>& trace, std::size_t slots) {
    std::vector<TraceRecord> kernels;
    std::vector<double> boundaries;
    for (const auto& e : trace) {
        if (e.event == TraceEvent::kernel) kernels.push_back(e);
        if (e.event == TraceEvent::sync) boundaries.push_back(e.time_end);
    }
    std::stable_sort(kernels.begin(), kernels.end(),
                     [](const TraceRecord& a, const TraceRecord& b) { return a.time_start < b.time_start; });
    std::sort(boundaries.begin(), boundaries.end());

    std::list<std::pair<TileKey, int>> lru;
    std::size_t used = 0;
    std::vector<TileKey> pinned;
    std::size_t outputs_live = 0;
    std::size_t outputs_done = 0;
    std::map<TaskId, std::size_t> steps_seen;
    long long fetches = 0;
    std::size_t b = 0;

    auto boundary = [&] {
        for (const auto& k : pinned)
            for (auto& e : lru)
                if (e.first == k) --e.second;
        pinned.clear();
        used -= outputs_done;
        outputs_live -= outputs_done;
        outputs_done = 0;
    };
    auto make_room = [&]() -> bool {
        while (used >= slots) {
            auto it = lru.end();
            bool evicted = false;
            while (it != lru.begin()) {
                --it;
                if (it->second == 0) {
                    lru.erase(it);
                    --used;
                    evicted = true;
                    break;
                }
            }
            if (!evicted) return false;
        }
        return true;
    };
    auto touch = [&](const TileKey& k) -> bool {
        for (auto it = lru.begin(); it != lru.end(); ++it) {
            if (it->first == k) {
                lru.splice(lru.begin(), lru, it);
                ++lru.front().second;
                pinned.push_back(k);
                return true;
            }
        }
        if (!make_room()) return false;
        ++used;
        lru.emplace_front(k, 1);
        pinned.push_back(k);
        ++fetches;
        return true;
    };

    for (const auto& kr : kernels) {
        while (b < boundaries.size() && boundaries[b] < kr.time_end) {
            boundary();
            ++b;
        }
        const Task& task = plan.tasks()[static_cast<std::size_t>(kr.task_id)];
        const std::size_t idx = steps_seen[task.id]++;
        const Step& step = task.steps[idx];
        if (idx == 0) {
            if (!make_room()) return -1;
            ++used;
            ++outputs_live;
        }
        if (!touch(step.a.host_key)) return -1;
        if (step.b && !touch(step.b->host_key)) return -1;
        if (idx + 1 == task.steps.size()) ++outputs_done;
    }
    return fetches;
}

Verdict criterion_5() {
    // 96 tiles hold one sweep's working set (4 outputs, 4 A strips and the
    // shared B column of 16 tiles each).
    const std::size_t t = 16;
    const std::size_t arena_tiles = 96;
    auto spec = support::gemm_spec(16 * t, t);
    Topology topo = support::accelerators(1, t, arena_tiles);

    RunOptions cached;
    cached.record_trace = true;
    RunOptions uncached;
    uncached.l1_enabled = false;

    auto p = Problem::random(spec, 5);
    RoutinePlan plan(p.call());
    const auto with = run_plan(plan, topo, cached);
    auto q = Problem::random(spec, 5);
    RoutinePlan plan2(q.call());
    const auto without = run_plan(plan2, topo, uncached);

    const std::uint64_t tile = support::tile_bytes(t);
    std::uint64_t steps = 0;
    for (const auto& task : plan.tasks()) steps += task.steps.size();
    const std::uint64_t expect_uncached = 2 * steps * tile;
    const long long predicted = replay_host_fetches(plan, with.trace, arena_tiles);
    const std::uint64_t got_cached = with.metrics.total_h2d_bytes();
    const std::uint64_t got_uncached = without.metrics.total_h2d_bytes();
    const double ratio = static_cast<double>(got_cached) / static_cast<double>(got_uncached);

    Verdict v;
    v.pass = got_uncached == expect_uncached && predicted >= 0 &&
             got_cached == static_cast<std::uint64_t>(predicted) * tile && ratio <= volume_ratio_limit;
    v.detail = "cached " + std::to_string(got_cached) + " B (oracle " +
               std::to_string(predicted < 0 ? -1 : predicted * static_cast<long long>(tile)) + "), uncached " +
               std::to_string(got_uncached) + " B (oracle " + std::to_string(expect_uncached) + "), ratio " +
               fmt("%.4f", ratio);
    return v;
}

// --- criterion 6 ------------------------------------------------------------

Verdict criterion_6() {
    const std::size_t t = 16;
    auto spec = support::gemm_spec(8 * t, t);
    Topology topo = support::accelerators(2, t, 64);
    RunOptions with;
    RunOptions without = with;
    without.l2_enabled = false;
    auto a = support::run_checked(Problem::random(spec, 6), topo, with);
    auto b = support::run_checked(Problem::random(spec, 6), topo, without);
    const auto ha = a.result.metrics.total_h2d_bytes();
    const auto hb = b.result.metrics.total_h2d_bytes();
    const auto d2d = a.result.metrics.total_d2d_bytes();
    const bool same_schedule = a.result.executed_by == b.result.executed_by;
    Verdict v;
    v.pass = a.result.metrics.l2_hits > 0 && ha < hb && hb - ha == d2d && same_schedule;
    v.detail = "l2_hits " + std::to_string(a.result.metrics.l2_hits) + ", H2D " + std::to_string(ha) + " vs " +
               std::to_string(hb) + ", difference " + std::to_string(hb - ha) + ", D2D " + std::to_string(d2d) +
               (same_schedule ? ", same task placement" : ", task placement differs");
    return v;
}

// --- criterion 7 ------------------------------------------------------------

Verdict criterion_7() {
    const std::size_t t = 32;
    ProblemSpec spec = support::gemm_spec(8 * t, t);
    spec.k = 32 * t;
    Topology topo = support::accelerators(1, t, 64, 5e9);
    RunOptions opts;
    opts.record_trace = true;
    auto p = Problem::random(spec, 7);
    RoutinePlan plan(p.call());
    const auto r = run_plan(plan, topo, opts);

    const double bw = topo.host_device_bandwidth;
    const double tile = static_cast<double>(support::tile_bytes(t));
    const double step_kernel = 2.0 * t * t * t / topo.devices[0].speed;
    const double step_transfer = 2.0 * tile / bw;
    const double kernels = r.metrics.device(0).compt_seconds;
    const double move_in = 2.0 * tile / bw;
    const double move_out = tile / bw;
    const double bound = kernels + move_in + move_out;
    const double makespan = r.metrics.makespan;
    Verdict v;
    v.pass = step_kernel >= 2.0 * step_transfer && makespan <= bound * (1.0 + overlap_slack);
    v.detail = "makespan " + fmt("%.6g", makespan) + " s, bound " + fmt("%.6g", bound) + " s (ratio " +
               fmt("%.5f", makespan / bound) + "), kernel/transfer per step " +
               fmt("%.2f", step_kernel / step_transfer);
    return v;
}

// --- criterion 8 ------------------------------------------------------------

Verdict criterion_8() {
    const std::size_t t = 32;
    auto spec = support::gemm_spec(12 * t, t);
    Topology topo;
    const std::size_t arena = 64 * support::tile_bytes(t);
    topo.devices = {support::accelerator(0, 2e10, arena, 0), support::accelerator(1, 1e10, arena, 1),
                    support::accelerator(2, 1e10, arena, 2)};
    auto o = support::run_checked(Problem::random(spec, 8), topo);
    const auto& m = o.result.metrics;
    double lo = m.makespan, hi = 0.0;
    for (const auto& d : m.devices) {
        lo = std::min(lo, d.elapsed_seconds);
        hi = std::max(hi, d.elapsed_seconds);
    }
    const double gap = (hi - lo) / m.makespan;
    const double fast = static_cast<double>(m.device(0).tasks_completed);
    const double slow = static_cast<double>(std::max(m.device(1).tasks_completed, m.device(2).tasks_completed));
    Verdict v;
    v.pass = gap <= balance_gap_limit && fast >= fast_task_ratio * slow && o.error <= numeric_tolerance;
    v.detail = "tasks " + std::to_string(m.device(0).tasks_completed) + "/" +
               std::to_string(m.device(1).tasks_completed) + "/" + std::to_string(m.device(2).tasks_completed) +
               ", busy-time gap " + fmt("%.2f", 100.0 * gap) + "% of makespan";
    return v;
}

// --- criterion 9 ------------------------------------------------------------

Verdict criterion_9() {
    const std::size_t t = 1024;
    auto shape = [t](MatrixId id, std::size_t r, std::size_t c) {
        return make_tiled(make_matrix_desc(id, r, c, r, {}), t);
    };
    const Routine routines[] = {Routine::syrk, Routine::syr2k, Routine::trsm, Routine::trmm, Routine::symm};
    bool ok = true;
    std::string detail;
    for (Routine r : routines) {
        double prev = -1.0;
        std::string row = std::string(to_string(r)) + ":";
        for (std::size_t p : {5, 10, 20}) {
            const std::size_t n = p * t;
            RoutineCall call;
            call.kind = r;
            call.beta = 1.0;
            call.a = shape(1, n, n);
            call.b = shape(2, n, n);
            call.c = shape(3, n, n);
            if (r == Routine::syrk) call.b.reset();
            if (r == Routine::trsm || r == Routine::trmm) call.c.reset();
            const double f = gemm_flop_fraction(call);
            if (f < prev) ok = false;
            if (p == 20 && f < flop_fraction_floor) ok = false;
            prev = f;
            row += " " + fmt("%.4f", f);
        }
        detail += (detail.empty() ? "" : "; ") + row;
    }
    return {ok, detail};
}

// --- criterion 10 -----------------------------------------------------------

Verdict criterion_10() {
    std::uint64_t violations = 0;
    std::string first;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto rep = fuzz::queue_stress(seed, 8, 8, 1000000);
        if (rep.violations && first.empty()) first = rep.first;
        violations += rep.violations;
    }
    Verdict v{violations == 0, "10 seeds x 1e6 tasks, 8+8 threads, " + std::to_string(violations) + " violations"};
    if (!first.empty()) v.detail += " (first: " + first + ")";
    return v;
}

// --- criterion 11 -----------------------------------------------------------

Verdict criterion_11(const SuiteResult& conc) {
    Topology topo = support::accelerators(3, 16, 32);
    topo.devices[2].peer_group = 1;
    topo.devices.push_back(support::host(9, 1e11));
    std::set<std::string> docs;
    for (int rep = 0; rep < 3; ++rep) {
        auto o = support::run_checked(Problem::random(support::gemm_spec(200, 16), 11), topo);
        docs.insert(metrics_to_json(o.result.metrics));
    }
    Verdict v;
    v.pass = docs.size() == 1 && conc.failures == 0;
    v.detail = std::to_string(docs.size()) + " distinct metrics documents over 3 runs; concurrent suite max error " +
               fmt("%.3g", conc.worst) + ", " + std::to_string(conc.failures) + " failures";
    if (conc.failures) v.detail += " (first: " + conc.first + ")";
    return v;
}

}  // namespace

int main() {
    int failed = 0;
    auto report = [&failed](int n, const std::function<Verdict()>& fn) {
        const auto t0 = Clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        if (!v.pass) ++failed;
        std::printf("criterion %d %s: %s [%.1f s]\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    };

    SuiteResult det;
    report(1, [&] {
        det = run_suite(ExecutionMode::deterministic);
        return criterion_1(det);
    });
    report(2, criterion_2);
    report(3, criterion_3);
    report(4, criterion_4);
    report(5, criterion_5);
    report(6, criterion_6);
    report(7, criterion_7);
    report(8, criterion_8);
    report(9, criterion_9);
    report(10, criterion_10);
    report(11, [] { return criterion_11(run_suite(ExecutionMode::concurrent)); });
    std::printf("%d of 11 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
