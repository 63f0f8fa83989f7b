#pragma once

#include <cstddef>
#include <cstdint>

#include "tilert/routines.hpp"
#include "tilert/tiling.hpp"

namespace tilert {

/// Shape and flags of one level-3 call, in BLAS terms. C (or B for the
/// triangular routines) is m x n; `k` is the inner dimension of GEMM, SYRK and
/// SYR2K. SYRK and SYR2K use `n` for the order of C.
struct ProblemSpec {
    Routine routine = Routine::gemm;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t tile_size = 1024;
    double alpha = 1.0;
    double beta = 0.0;
    bool trans_a = false;
    bool trans_b = false;
    Uplo uplo = Uplo::upper;
    Side side = Side::left;
    Diag diag = Diag::non_unit;
};

/// Host operands of one call. Copies own their storage, so a copy can be
/// handed to the reference implementation while the original goes to the
/// runtime.
class Problem {
public:
    /// Entries uniform in [-1, 1]. Triangular operands have their unused
    /// triangle zeroed; for TRSM they are also made well conditioned
    /// (off-diagonal entries scaled by 1/order, diagonal magnitude in [1, 2]).
    static Problem random(const ProblemSpec& spec, std::uint64_t seed);

    const ProblemSpec& spec() const noexcept { return spec_; }
    HostMatrix& a() noexcept { return a_; }
    HostMatrix& b() noexcept { return b_; }
    HostMatrix& c() noexcept { return c_; }

    /// The matrix the call overwrites.
    HostMatrix& output() noexcept;

    /// A call whose descriptors point into this problem's storage.
    RoutineCall call();

private:
    ProblemSpec spec_;
    HostMatrix a_;
    HostMatrix b_;
    HostMatrix c_;
};

}  // namespace tilert
