#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "expected.hpp"
#include "tilert/errors.hpp"
#include "tilert/routines.hpp"
#include "tilert/workload.hpp"

using namespace tilert;

namespace {

TiledMatrixDesc shape(MatrixId id, std::size_t rows, std::size_t cols, std::size_t t) {
    return make_tiled(make_matrix_desc(id, rows, cols, rows, {}), t);
}

const Task& find_task(const std::vector<Task>& tasks, std::size_t i, std::size_t j) {
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const Task& t) { return t.i == i && t.j == j; });
    REQUIRE(it != tasks.end());
    return *it;
}

ProblemSpec random_spec(Routine r, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> dim(1, 40);
    std::uniform_int_distribution<std::size_t> tile(3, 16);
    std::bernoulli_distribution coin(0.5);
    ProblemSpec s;
    s.routine = r;
    s.m = dim(rng);
    s.n = dim(rng);
    s.k = dim(rng);
    s.tile_size = tile(rng);
    s.alpha = coin(rng) ? 1.0 : -0.75;
    s.beta = coin(rng) ? 0.0 : 0.5;
    s.trans_a = coin(rng);
    s.trans_b = coin(rng);
    s.uplo = coin(rng) ? Uplo::upper : Uplo::lower;
    s.side = coin(rng) ? Side::left : Side::right;
    s.diag = coin(rng) ? Diag::unit : Diag::non_unit;
    return s;
}

constexpr Routine all_routines[] = {Routine::gemm, Routine::syrk, Routine::trsm,
                                    Routine::trmm, Routine::syr2k, Routine::symm};

}  // namespace

TEST_CASE("degree_of_parallelism examples") {
    CHECK(degree_of_parallelism(39936, 39936, 1024) == 1521);
    CHECK(degree_of_parallelism(1024, 1024, 1024) == 1);
    CHECK(degree_of_parallelism(5000, 3000, 1024) == 15);
}

TEST_CASE("GEMM 3x2 output tiles with 4 inner tiles") {
    RoutineCall call;
    call.kind = Routine::gemm;
    call.a = shape(1, 12, 16, 4);
    call.b = shape(2, 16, 8, 4);
    call.c = shape(3, 12, 8, 4);
    const auto tasks = generate_tasks(call);
    REQUIRE(tasks.size() == 6);
    for (const auto& t : tasks) {
        CHECK(t.steps.size() == 4);
        CHECK(t.deps_remaining == 0);
        CHECK(t.dependents.empty());
        for (const auto& s : t.steps) CHECK(s.kind == KernelKind::gemm_update);
    }
}

TEST_CASE("TRSM upper left dependencies") {
    RoutineCall call;
    call.kind = Routine::trsm;
    call.uplo = Uplo::upper;
    call.side = Side::left;
    call.a = shape(1, 6, 6, 2);
    call.b = shape(2, 6, 2, 2);
    const auto tasks = generate_tasks(call);
    REQUIRE(tasks.size() == 3);

    const auto& t2 = find_task(tasks, 2, 0);
    const auto& t1 = find_task(tasks, 1, 0);
    const auto& t0 = find_task(tasks, 0, 0);
    CHECK(t2.deps_remaining == 0);
    CHECK(t1.deps_remaining == 1);
    CHECK(t0.deps_remaining == 2);
    CHECK(std::count(t2.dependents.begin(), t2.dependents.end(), t1.id) == 1);
    CHECK(std::count(t2.dependents.begin(), t2.dependents.end(), t0.id) == 1);
    CHECK(std::count(t1.dependents.begin(), t1.dependents.end(), t0.id) == 1);
    CHECK(t0.steps.back().kind == KernelKind::trsm_solve);
    CHECK(t0.steps.size() == 3);
}

TEST_CASE("SYRK upper 2x2 tiles") {
    RoutineCall call;
    call.kind = Routine::syrk;
    call.uplo = Uplo::upper;
    call.a = shape(1, 8, 8, 4);
    call.c = shape(3, 8, 8, 4);
    const auto tasks = generate_tasks(call);
    REQUIRE(tasks.size() == 3);
    const auto& off = find_task(tasks, 0, 1);
    CHECK(off.steps.size() == 2);
    for (const auto& s : off.steps) CHECK(s.kind == KernelKind::gemm_update);
    for (auto ij : {0, 1}) {
        const auto& d = find_task(tasks, ij, ij);
        for (const auto& s : d.steps) CHECK(s.kind == KernelKind::syrk_update);
    }
}

TEST_CASE("task flop examples") {
    RoutineCall call;
    call.kind = Routine::gemm;
    call.a = shape(1, 1024, 4096, 1024);
    call.b = shape(2, 4096, 1024, 1024);
    call.c = shape(3, 1024, 1024, 1024);
    auto tasks = generate_tasks(call);
    REQUIRE(tasks.size() == 1);
    CHECK(task_flops(tasks[0]) == 8589934592ULL);

    call.a = shape(1, 1, 1, 1);
    call.b = shape(2, 1, 1, 1);
    call.c = shape(3, 1, 1, 1);
    tasks = generate_tasks(call);
    CHECK(task_flops(tasks[0]) == 2);

    RoutineCall syrk;
    syrk.kind = Routine::syrk;
    syrk.a = shape(1, 2, 2, 2);
    syrk.c = shape(3, 2, 2, 2);
    tasks = generate_tasks(syrk);
    REQUIRE(tasks.size() == 1);
    CHECK(task_flops(tasks[0]) == 12);
}

TEST_CASE("gemm_flop_fraction") {
    RoutineCall gemm;
    gemm.kind = Routine::gemm;
    gemm.a = shape(1, 30, 20, 7);
    gemm.b = shape(2, 20, 50, 7);
    gemm.c = shape(3, 30, 50, 7);
    CHECK(gemm_flop_fraction(gemm) == 1.0);

    const std::size_t t = 8;
    double previous = 0.0;
    for (std::size_t p = 1; p <= 12; ++p) {
        RoutineCall syrk;
        syrk.kind = Routine::syrk;
        syrk.a = shape(1, p * t, p * t, t);
        syrk.c = shape(3, p * t, p * t, t);
        const double frac = gemm_flop_fraction(syrk);

        // Brute force: off-diagonal tasks run p gemm steps, diagonal tasks p
        // triangle steps of t(t+1)t flops.
        const double gemm_flops = static_cast<double>(p * (p - 1) / 2 * p * 2 * t * t * t);
        const double diag_flops = static_cast<double>(p * p * t * (t + 1) * t);
        CHECK(frac == doctest::Approx(gemm_flops / (gemm_flops + diag_flops)).epsilon(1e-14));
        CHECK(std::abs(frac - static_cast<double>(p - 1) / static_cast<double>(p)) <= 1.0 / t);
        CHECK(frac >= previous);
        previous = frac;
    }
}

TEST_CASE("validate rejects non-conformant calls") {
    RoutineCall call;
    call.kind = Routine::gemm;
    call.a = shape(1, 8, 6, 4);
    call.b = shape(2, 5, 8, 4);
    call.c = shape(3, 8, 8, 4);
    CHECK_THROWS_AS(validate(call), InvalidArgument);
    CHECK_THROWS_AS(generate_tasks(call), InvalidArgument);

    RoutineCall syrk;
    syrk.kind = Routine::syrk;
    syrk.a = shape(1, 8, 3, 4);
    syrk.c = shape(3, 8, 6, 4);
    CHECK_THROWS_AS(validate(syrk), InvalidArgument);

    RoutineCall tiles;
    tiles.kind = Routine::gemm;
    tiles.a = shape(1, 8, 8, 4);
    tiles.b = shape(2, 8, 8, 2);
    tiles.c = shape(3, 8, 8, 4);
    CHECK_THROWS_AS(validate(tiles), InvalidArgument);
}

TEST_CASE("sequential execution matches the dense oracle") {
    std::mt19937_64 rng(2024);
    for (Routine r : all_routines) {
        for (int rep = 0; rep < 25; ++rep) {
            const auto spec = random_spec(r, rng);
            auto p = Problem::random(spec, rng());
            const auto want = oracle::expected_output(p);
            RoutinePlan plan(p.call());
            run_sequential(plan);
            INFO(to_string(r), " m=", spec.m, " n=", spec.n, " k=", spec.k, " T=", spec.tile_size);
            CHECK(oracle::rel_error(oracle::from_host(p.output()), want) <= 1e-10);
        }
    }
}

TEST_CASE("task counts and output coverage") {
    std::mt19937_64 rng(77);
    for (Routine r : all_routines) {
        for (int rep = 0; rep < 20; ++rep) {
            const auto spec = random_spec(r, rng);
            auto p = Problem::random(spec, rng());
            RoutinePlan plan(p.call());
            const auto& out = plan.call().output();
            std::set<std::pair<std::size_t, std::size_t>> seen;
            for (const auto& t : plan.tasks()) CHECK(seen.insert({t.i, t.j}).second);
            if (r == Routine::syrk || r == Routine::syr2k) {
                const std::size_t q = out.tile_rows;
                CHECK(plan.tasks().size() == q * (q + 1) / 2);
            } else {
                CHECK(plan.tasks().size() ==
                      degree_of_parallelism(out.matrix.rows, out.matrix.cols, out.tile_size));
            }
            for (std::size_t id = 0; id < plan.tasks().size(); ++id) CHECK(plan.tasks()[id].id == id);
        }
    }
}

TEST_CASE("flops agree with executed multiply-add pairs") {
    std::mt19937_64 rng(31);
    for (Routine r : all_routines) {
        for (int rep = 0; rep < 10; ++rep) {
            const auto spec = random_spec(r, rng);
            auto p = Problem::random(spec, rng());
            RoutinePlan plan(p.call());
            for (const auto& t : plan.tasks()) {
                std::uint64_t sum = 0;
                for (const auto& s : t.steps) sum += s.flops;
                CHECK(t.flops == sum);
                CHECK(task_flops(t) == sum);
            }
            std::uint64_t flops = 0;
            std::uint64_t slack = 0;
            for (const auto& t : plan.tasks()) {
                flops += t.flops;
                for (const auto& s : t.steps) {
                    if (s.kind == KernelKind::trsm_solve || s.kind == KernelKind::trmm_diag) {
                        const auto order = t.side == Side::left ? s.a.height : s.a.width;
                        const auto other = t.side == Side::left ? t.output.width : t.output.height;
                        slack += order * other;
                    }
                }
            }
            reset_kernel_mac_count();
            run_sequential(plan);
            const auto macs2 = 2 * kernel_mac_count();
            INFO(to_string(r));
            if (slack == 0) {
                CHECK(macs2 == flops);
            } else {
                const auto diff = macs2 > flops ? macs2 - flops : flops - macs2;
                CHECK(diff <= slack);
            }
        }
    }
}

TEST_CASE("TRSM dependency graph is acyclic and ordered") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 30; ++rep) {
        auto spec = random_spec(Routine::trsm, rng);
        auto p = Problem::random(spec, rng());
        RoutinePlan plan(p.call());
        const auto& tasks = plan.tasks();
        std::vector<std::uint32_t> indeg(tasks.size(), 0);
        for (const auto& t : tasks)
            for (auto d : t.dependents) ++indeg[d];
        for (const auto& t : tasks) CHECK(indeg[t.id] == t.deps_remaining);

        std::vector<TaskId> ready;
        for (const auto& t : tasks)
            if (indeg[t.id] == 0) ready.push_back(t.id);
        std::size_t visited = 0;
        while (!ready.empty()) {
            const auto id = ready.back();
            ready.pop_back();
            ++visited;
            for (auto d : tasks[id].dependents)
                if (--indeg[d] == 0) ready.push_back(d);
        }
        CHECK(visited == tasks.size());
        for (const auto& t : tasks)
            for (auto d : t.dependents) {
                if (spec.side == Side::left) {
                    CHECK(tasks[d].j == t.j);
                } else {
                    CHECK(tasks[d].i == t.i);
                }
            }
    }
}

TEST_CASE("routine name round trip") {
    for (Routine r : all_routines) CHECK(parse_routine(to_string(r)) == r);
    CHECK_FALSE(parse_routine("herk").has_value());
}
