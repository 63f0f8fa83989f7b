#include "tilert/kernels.hpp"

#include <string>

#include "tilert/errors.hpp"

namespace tilert {

namespace {

thread_local std::uint64_t mac_counter = 0;

// Strided element access to op(X).
struct OpAccess {
    const double* p;
    std::size_t row_stride;
    std::size_t col_stride;

    explicit OpAccess(const ConstTileView& v)
        : p(v.data.data()),
          row_stride(v.trans ? v.rows : 1),
          col_stride(v.trans ? 1 : v.rows) {}

    double operator()(std::size_t r, std::size_t c) const noexcept {
        return p[r * row_stride + c * col_stride];
    }
};

void require(bool ok, const char* what) {
    if (!ok) {
        throw InvalidArgument(what);
    }
}

void check_buffer(const ConstTileView& v, const char* name) {
    if (v.data.size() < v.rows * v.cols) {
        throw InvalidArgument(std::string("tile buffer too small for operand ") + name);
    }
}

inline void store(double& dst, double alpha, double sum, double beta) {
    dst = beta == 0.0 ? alpha * sum : alpha * sum + beta * dst;
}

inline bool in_triangle(Uplo uplo, std::size_t i, std::size_t j) {
    return uplo == Uplo::upper ? i <= j : i >= j;
}

}  // namespace

std::string_view to_string(KernelKind kind) noexcept {
    switch (kind) {
        case KernelKind::gemm_update: return "gemm_update";
        case KernelKind::syrk_update: return "syrk_update";
        case KernelKind::syr2k_update: return "syr2k_update";
        case KernelKind::trsm_solve: return "trsm_solve";
        case KernelKind::trmm_diag: return "trmm_diag";
        case KernelKind::symm_diag: return "symm_diag";
    }
    return "unknown";
}

std::uint64_t kernel_mac_count() noexcept { return mac_counter; }
void reset_kernel_mac_count() noexcept { mac_counter = 0; }

void gemm_update(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta) {
    check_buffer(a, "A");
    check_buffer(b, "B");
    check_buffer(c, "C");
    require(a.op_rows() == c.rows && b.op_cols() == c.cols && a.op_cols() == b.op_rows(),
            "gemm_update: operand shapes do not conform");
    const std::size_t depth = a.op_cols();
    const OpAccess ea(a);
    const OpAccess eb(b);
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            double sum = 0.0;
            for (std::size_t k = 0; k < depth; ++k) {
                sum += ea(i, k) * eb(k, j);
            }
            store(c(i, j), alpha, sum, beta);
        }
    }
    mac_counter += c.rows * c.cols * depth;
}

void syrk_update(TileView c, ConstTileView a, double alpha, double beta, Uplo uplo) {
    check_buffer(a, "A");
    check_buffer(c, "C");
    require(c.rows == c.cols, "syrk_update: output tile must be square");
    require(a.op_rows() == c.rows, "syrk_update: operand shapes do not conform");
    const std::size_t depth = a.op_cols();
    const OpAccess ea(a);
    std::uint64_t entries = 0;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            if (!in_triangle(uplo, i, j)) {
                continue;
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < depth; ++k) {
                sum += ea(i, k) * ea(j, k);
            }
            store(c(i, j), alpha, sum, beta);
            ++entries;
        }
    }
    mac_counter += entries * depth;
}

void syr2k_update(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Uplo uplo) {
    check_buffer(a, "A");
    check_buffer(b, "B");
    check_buffer(c, "C");
    require(c.rows == c.cols, "syr2k_update: output tile must be square");
    require(a.op_rows() == c.rows && b.op_rows() == c.rows && a.op_cols() == b.op_cols(),
            "syr2k_update: operand shapes do not conform");
    const std::size_t depth = a.op_cols();
    const OpAccess ea(a);
    const OpAccess eb(b);
    std::uint64_t entries = 0;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            if (!in_triangle(uplo, i, j)) {
                continue;
            }
            double sum = 0.0;
            for (std::size_t k = 0; k < depth; ++k) {
                sum += ea(i, k) * eb(j, k);
                sum += eb(i, k) * ea(j, k);
            }
            store(c(i, j), alpha, sum, beta);
            ++entries;
        }
    }
    mac_counter += 2 * entries * depth;
}

void trsm_solve(TileView b, ConstTileView a, double alpha, Side side, Uplo uplo, Diag diag) {
    check_buffer(a, "A");
    check_buffer(b, "B");
    require(a.rows == a.cols, "trsm_solve: triangular tile must be square");
    const std::size_t n = a.rows;
    require(side == Side::left ? b.rows == n : b.cols == n, "trsm_solve: operand shapes do not conform");
    const OpAccess ea(a);
    if (diag == Diag::non_unit) {
        for (std::size_t d = 0; d < n; ++d) {
            if (ea(d, d) == 0.0) {
                throw SingularMatrix("trsm_solve: zero on the diagonal at " + std::to_string(d));
            }
        }
    }
    // op(A) is upper triangular when exactly one of (stored upper, transposed) holds.
    const bool eff_upper = (uplo == Uplo::upper) != a.trans;
    const bool unit = diag == Diag::unit;
    std::uint64_t macs = 0;

    if (side == Side::left) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            for (std::size_t r = 0; r < n; ++r) {
                b(r, j) *= alpha;
            }
            for (std::size_t step = 0; step < n; ++step) {
                const std::size_t i = eff_upper ? n - 1 - step : step;
                double s = b(i, j);
                const std::size_t k_lo = eff_upper ? i + 1 : 0;
                const std::size_t k_hi = eff_upper ? n : i;
                for (std::size_t k = k_lo; k < k_hi; ++k) {
                    s -= ea(i, k) * b(k, j);
                }
                macs += k_hi - k_lo;
                if (!unit) {
                    s /= ea(i, i);
                    ++macs;
                }
                b(i, j) = s;
            }
        }
    } else {
        for (std::size_t i = 0; i < b.rows; ++i) {
            for (std::size_t c = 0; c < n; ++c) {
                b(i, c) *= alpha;
            }
            for (std::size_t step = 0; step < n; ++step) {
                const std::size_t j = eff_upper ? step : n - 1 - step;
                double s = b(i, j);
                const std::size_t k_lo = eff_upper ? 0 : j + 1;
                const std::size_t k_hi = eff_upper ? j : n;
                for (std::size_t k = k_lo; k < k_hi; ++k) {
                    s -= b(i, k) * ea(k, j);
                }
                macs += k_hi - k_lo;
                if (!unit) {
                    s /= ea(j, j);
                    ++macs;
                }
                b(i, j) = s;
            }
        }
    }
    mac_counter += macs;
}

void trmm_diag(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Side side,
               Uplo uplo, Diag diag) {
    check_buffer(a, "A");
    check_buffer(b, "B");
    check_buffer(c, "C");
    require(a.rows == a.cols, "trmm_diag: triangular tile must be square");
    const std::size_t n = a.rows;
    require(b.op_rows() == c.rows && b.op_cols() == c.cols, "trmm_diag: operand shapes do not conform");
    require(side == Side::left ? c.rows == n : c.cols == n, "trmm_diag: operand shapes do not conform");
    const OpAccess ea(a);
    const OpAccess eb(b);
    const bool eff_upper = (uplo == Uplo::upper) != a.trans;
    const bool unit = diag == Diag::unit;
    std::uint64_t macs = 0;

    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            double sum = 0.0;
            if (side == Side::left) {
                const std::size_t k_lo = eff_upper ? i : 0;
                const std::size_t k_hi = eff_upper ? n : i + 1;
                for (std::size_t k = k_lo; k < k_hi; ++k) {
                    if (k == i && unit) {
                        sum += eb(k, j);
                    } else {
                        sum += ea(i, k) * eb(k, j);
                        ++macs;
                    }
                }
            } else {
                const std::size_t k_lo = eff_upper ? 0 : j;
                const std::size_t k_hi = eff_upper ? j + 1 : n;
                for (std::size_t k = k_lo; k < k_hi; ++k) {
                    if (k == j && unit) {
                        sum += eb(i, k);
                    } else {
                        sum += eb(i, k) * ea(k, j);
                        ++macs;
                    }
                }
            }
            store(c(i, j), alpha, sum, beta);
        }
    }
    mac_counter += macs;
}

void symm_diag(TileView c, ConstTileView a, ConstTileView b, double alpha, double beta, Side side,
               Uplo uplo) {
    check_buffer(a, "A");
    check_buffer(b, "B");
    check_buffer(c, "C");
    require(a.rows == a.cols, "symm_diag: symmetric tile must be square");
    const std::size_t n = a.rows;
    require(b.op_rows() == c.rows && b.op_cols() == c.cols, "symm_diag: operand shapes do not conform");
    require(side == Side::left ? c.rows == n : c.cols == n, "symm_diag: operand shapes do not conform");
    // Symmetric tiles are never transposed in practice; the stored triangle is
    // read directly from the physical buffer.
    const double* ap = a.data.data();
    auto sym = [&](std::size_t r, std::size_t k) {
        return in_triangle(uplo, r, k) ? ap[r + k * n] : ap[k + r * n];
    };
    const OpAccess eb(b);
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            double sum = 0.0;
            if (side == Side::left) {
                for (std::size_t k = 0; k < n; ++k) {
                    sum += sym(i, k) * eb(k, j);
                }
            } else {
                for (std::size_t k = 0; k < n; ++k) {
                    sum += eb(i, k) * sym(k, j);
                }
            }
            store(c(i, j), alpha, sum, beta);
        }
    }
    mac_counter += c.rows * c.cols * n;
}

}  // namespace tilert
