#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace tilert {

enum class Uplo { upper, lower };
enum class Side { left, right };
enum class Diag { unit, non_unit };

enum class KernelKind { gemm_update, syrk_update, syr2k_update, trsm_solve, trmm_diag, symm_diag };

std::string_view to_string(KernelKind kind) noexcept;

/// Read-only contiguous column-major tile. `rows`/`cols` are physical; the
/// kernel sees op(tile), the transpose when `trans` is set.
struct ConstTileView {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool trans = false;

    std::size_t op_rows() const noexcept { return trans ? cols : rows; }
    std::size_t op_cols() const noexcept { return trans ? rows : cols; }
    double op(std::size_t r, std::size_t c) const noexcept {
        return trans ? data[c + r * rows] : data[r + c * rows];
    }
};

struct TileView {
    std::span<double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    double& operator()(std::size_t r, std::size_t c) const noexcept { return data[r + c * rows]; }
    operator ConstTileView() const noexcept { return {data, rows, cols, false}; }
};

// Reference tile kernels. Every kernel accumulates its inner products with
// the summation index ascending, so results are bit-reproducible. A beta of
// exactly zero overwrites the output without reading it.

/// C <- alpha * op(A) * op(B) + beta * C
void gemm_update(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta);

/// Stored triangle of C <- alpha * op(A) * op(A)^T + beta * C.
void syrk_update(TileView c, ConstTileView a, double alpha, double beta, Uplo uplo);

/// Stored triangle of C <- alpha * (op(A) op(B)^T + op(B) op(A)^T) + beta * C.
void syr2k_update(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Uplo uplo);

/// B <- alpha * op(A)^-1 * B (left) or alpha * B * op(A)^-1 (right) by
/// substitution. `uplo` names the stored triangle of the physical tile A.
/// Throws SingularMatrix on a zero diagonal unless `diag` is unit.
void trsm_solve(TileView b, ConstTileView a, double alpha, Side side, Uplo uplo, Diag diag);

/// C <- alpha * op(A) * B + beta * C (left) or alpha * B * op(A) + beta * C
/// (right) with A triangular.
void trmm_diag(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Side side,
               Uplo uplo, Diag diag);

/// C <- alpha * S * B + beta * C (left) or alpha * B * S + beta * C (right),
/// where S is the symmetric matrix whose `uplo` triangle is stored in A.
void symm_diag(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Side side,
               Uplo uplo);

/// Scalar multiply-add pairs executed by kernels on this thread (a division
/// in a substitution counts as one pair).
std::uint64_t kernel_mac_count() noexcept;
void reset_kernel_mac_count() noexcept;

}  // namespace tilert
