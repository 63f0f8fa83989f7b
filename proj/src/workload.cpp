#include "tilert/workload.hpp"

#include <cmath>
#include <random>

#include "tilert/errors.hpp"

namespace tilert {

namespace {

constexpr MatrixId id_a = 1;
constexpr MatrixId id_b = 2;
constexpr MatrixId id_c = 3;

void fill(HostMatrix& m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : m.data()) x = u(rng);
}

void symmetrize(HostMatrix& m, Uplo uplo) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
        for (std::size_t i = j + 1; i < m.rows(); ++i) {
            if (uplo == Uplo::upper) {
                m(i, j) = m(j, i);
            } else {
                m(j, i) = m(i, j);
            }
        }
    }
}

void make_triangular(HostMatrix& m, Uplo uplo, bool condition, std::mt19937_64& rng) {
    const std::size_t n = m.rows();
    std::uniform_real_distribution<double> mag(1.0, 2.0);
    std::bernoulli_distribution sign(0.5);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            const bool stored = uplo == Uplo::upper ? i <= j : i >= j;
            if (!stored) {
                m(i, j) = 0.0;
            } else if (condition && i != j) {
                m(i, j) /= static_cast<double>(n);
            }
        }
        if (condition) m(j, j) = (sign(rng) ? -1.0 : 1.0) * mag(rng);
    }
}

}  // namespace

Problem Problem::random(const ProblemSpec& spec, std::uint64_t seed) {
    if (spec.tile_size == 0) throw InvalidArgument("tile size must be at least 1");
    Problem p;
    p.spec_ = spec;
    const std::size_t m = spec.m;
    const std::size_t n = spec.n;
    const std::size_t k = spec.k;
    switch (spec.routine) {
        case Routine::gemm:
            p.a_ = spec.trans_a ? HostMatrix(id_a, k, m) : HostMatrix(id_a, m, k);
            p.b_ = spec.trans_b ? HostMatrix(id_b, n, k) : HostMatrix(id_b, k, n);
            p.c_ = HostMatrix(id_c, m, n);
            break;
        case Routine::syrk:
        case Routine::syr2k:
            p.a_ = spec.trans_a ? HostMatrix(id_a, k, n) : HostMatrix(id_a, n, k);
            if (spec.routine == Routine::syr2k) {
                p.b_ = spec.trans_a ? HostMatrix(id_b, k, n) : HostMatrix(id_b, n, k);
            }
            p.c_ = HostMatrix(id_c, n, n);
            break;
        case Routine::symm: {
            const std::size_t order = spec.side == Side::left ? m : n;
            p.a_ = HostMatrix(id_a, order, order);
            p.b_ = HostMatrix(id_b, m, n);
            p.c_ = HostMatrix(id_c, m, n);
            break;
        }
        case Routine::trmm:
        case Routine::trsm: {
            const std::size_t order = spec.side == Side::left ? m : n;
            p.a_ = HostMatrix(id_a, order, order);
            p.b_ = HostMatrix(id_b, m, n);
            break;
        }
    }
    std::mt19937_64 rng(seed);
    fill(p.a_, rng);
    fill(p.b_, rng);
    fill(p.c_, rng);
    if (spec.routine == Routine::symm) symmetrize(p.a_, spec.uplo);
    if (spec.routine == Routine::syrk || spec.routine == Routine::syr2k) symmetrize(p.c_, spec.uplo);
    if (spec.routine == Routine::trmm || spec.routine == Routine::trsm) {
        make_triangular(p.a_, spec.uplo, spec.routine == Routine::trsm, rng);
    }
    return p;
}

HostMatrix& Problem::output() noexcept {
    return spec_.routine == Routine::trmm || spec_.routine == Routine::trsm ? b_ : c_;
}

RoutineCall Problem::call() {
    RoutineCall call;
    call.kind = spec_.routine;
    call.alpha = spec_.alpha;
    call.beta = spec_.beta;
    call.trans_a = spec_.trans_a;
    call.trans_b = spec_.trans_b;
    call.uplo = spec_.uplo;
    call.side = spec_.side;
    call.diag = spec_.diag;
    const std::size_t t = spec_.tile_size;
    if (!a_.data().empty()) call.a = make_tiled(a_.desc(), t);
    if (!b_.data().empty()) call.b = make_tiled(b_.desc(), t);
    if (!c_.data().empty()) call.c = make_tiled(c_.desc(), t);
    return call;
}

}  // namespace tilert
