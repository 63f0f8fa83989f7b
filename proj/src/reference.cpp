#include "tilert/reference.hpp"

#include <cmath>
#include <vector>

#include "tilert/errors.hpp"

namespace tilert::reference {

namespace {

double op(const MatrixDesc& m, bool trans, std::size_t r, std::size_t c) {
    return trans ? m.at(c, r) : m.at(r, c);
}

void update(double& dst, double alpha, double sum, double beta) {
    dst = beta == 0.0 ? alpha * sum : alpha * sum + beta * dst;
}

bool stored(Uplo uplo, std::size_t r, std::size_t c) {
    return uplo == Uplo::upper ? r <= c : r >= c;
}

// Dense n x n copy of op(A) with the unstored triangle zeroed and, for a unit
// diagonal, ones on the diagonal.
std::vector<double> dense_triangular(const MatrixDesc& a, Uplo uplo, bool trans, Diag diag) {
    const std::size_t n = a.rows;
    std::vector<double> t(n * n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            // Element (r, c) of op(A) lives at physical (pr, pc).
            const std::size_t pr = trans ? c : r;
            const std::size_t pc = trans ? r : c;
            if (pr == pc) {
                t[r + c * n] = diag == Diag::unit ? 1.0 : a.at(pr, pc);
            } else if (stored(uplo, pr, pc)) {
                t[r + c * n] = a.at(pr, pc);
            }
        }
    }
    return t;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
          const MatrixDesc& c) {
    const std::size_t depth = trans_a ? a.rows : a.cols;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            double sum = 0.0;
            for (std::size_t l = 0; l < depth; ++l) {
                sum += op(a, trans_a, i, l) * op(b, trans_b, l, j);
            }
            update(c.at(i, j), alpha, sum, beta);
        }
    }
}

void syrk(Uplo uplo, bool trans, double alpha, const MatrixDesc& a, double beta, const MatrixDesc& c) {
    const std::size_t depth = trans ? a.rows : a.cols;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            if (!stored(uplo, i, j)) continue;
            double sum = 0.0;
            for (std::size_t l = 0; l < depth; ++l) {
                sum += op(a, trans, i, l) * op(a, trans, j, l);
            }
            update(c.at(i, j), alpha, sum, beta);
        }
    }
}

void syr2k(Uplo uplo, bool trans, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
           const MatrixDesc& c) {
    const std::size_t depth = trans ? a.rows : a.cols;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            if (!stored(uplo, i, j)) continue;
            double sum = 0.0;
            for (std::size_t l = 0; l < depth; ++l) {
                sum += op(a, trans, i, l) * op(b, trans, j, l) + op(b, trans, i, l) * op(a, trans, j, l);
            }
            update(c.at(i, j), alpha, sum, beta);
        }
    }
}

void symm(Side side, Uplo uplo, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
          const MatrixDesc& c) {
    auto s = [&](std::size_t r, std::size_t q) { return stored(uplo, r, q) ? a.at(r, q) : a.at(q, r); };
    const std::size_t depth = a.rows;
    for (std::size_t j = 0; j < c.cols; ++j) {
        for (std::size_t i = 0; i < c.rows; ++i) {
            double sum = 0.0;
            for (std::size_t l = 0; l < depth; ++l) {
                sum += side == Side::left ? s(i, l) * b.at(l, j) : b.at(i, l) * s(l, j);
            }
            update(c.at(i, j), alpha, sum, beta);
        }
    }
}

void trmm(Side side, Uplo uplo, bool trans_a, Diag diag, double alpha, const MatrixDesc& a,
          const MatrixDesc& b) {
    const std::size_t n = a.rows;
    const auto t = dense_triangular(a, uplo, trans_a, diag);
    std::vector<double> orig(b.rows * b.cols);
    for (std::size_t j = 0; j < b.cols; ++j)
        for (std::size_t i = 0; i < b.rows; ++i) orig[i + j * b.rows] = b.at(i, j);
    for (std::size_t j = 0; j < b.cols; ++j) {
        for (std::size_t i = 0; i < b.rows; ++i) {
            double sum = 0.0;
            for (std::size_t l = 0; l < n; ++l) {
                sum += side == Side::left ? t[i + l * n] * orig[l + j * b.rows]
                                          : orig[i + l * b.rows] * t[l + j * n];
            }
            b.at(i, j) = alpha * sum;
        }
    }
}

void trsm(Side side, Uplo uplo, bool trans_a, Diag diag, double alpha, const MatrixDesc& a,
          const MatrixDesc& b) {
    const std::size_t n = a.rows;
    const auto t = dense_triangular(a, uplo, trans_a, diag);
    for (std::size_t d = 0; d < n; ++d) {
        if (t[d + d * n] == 0.0) throw SingularMatrix("reference trsm: singular triangular matrix");
    }
    const bool upper = (uplo == Uplo::upper) != trans_a;
    if (side == Side::left) {
        // T X = alpha B, one column at a time.
        for (std::size_t j = 0; j < b.cols; ++j) {
            std::vector<double> x(n);
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t i = upper ? n - 1 - s : s;
                double v = alpha * b.at(i, j);
                for (std::size_t l = 0; l < n; ++l) {
                    if (l != i && t[i + l * n] != 0.0) v -= t[i + l * n] * x[l];
                }
                x[i] = v / t[i + i * n];
            }
            for (std::size_t i = 0; i < n; ++i) b.at(i, j) = x[i];
        }
    } else {
        // X T = alpha B, one row at a time.
        for (std::size_t i = 0; i < b.rows; ++i) {
            std::vector<double> x(n);
            for (std::size_t s = 0; s < n; ++s) {
                const std::size_t j = upper ? s : n - 1 - s;
                double v = alpha * b.at(i, j);
                for (std::size_t l = 0; l < n; ++l) {
                    if (l != j && t[l + j * n] != 0.0) v -= x[l] * t[l + j * n];
                }
                x[j] = v / t[j + j * n];
            }
            for (std::size_t j = 0; j < n; ++j) b.at(i, j) = x[j];
        }
    }
}

void run(const RoutineCall& call) {
    validate(call);
    switch (call.kind) {
        case Routine::gemm:
            gemm(call.trans_a, call.trans_b, call.alpha, call.a->matrix, call.b->matrix, call.beta,
                 call.c->matrix);
            break;
        case Routine::syrk: syrk(call.uplo, call.trans_a, call.alpha, call.a->matrix, call.beta, call.c->matrix); break;
        case Routine::syr2k:
            syr2k(call.uplo, call.trans_a, call.alpha, call.a->matrix, call.b->matrix, call.beta, call.c->matrix);
            break;
        case Routine::symm:
            symm(call.side, call.uplo, call.alpha, call.a->matrix, call.b->matrix, call.beta, call.c->matrix);
            break;
        case Routine::trmm:
            trmm(call.side, call.uplo, call.trans_a, call.diag, call.alpha, call.a->matrix, call.b->matrix);
            break;
        case Routine::trsm:
            trsm(call.side, call.uplo, call.trans_a, call.diag, call.alpha, call.a->matrix, call.b->matrix);
            break;
    }
}

double relative_frobenius_error(const MatrixDesc& got, const MatrixDesc& want) {
    if (got.rows != want.rows || got.cols != want.cols) {
        throw InvalidArgument("relative_frobenius_error: shape mismatch");
    }
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < want.cols; ++j) {
        for (std::size_t i = 0; i < want.rows; ++i) {
            const double d = got.at(i, j) - want.at(i, j);
            diff += d * d;
            norm += want.at(i, j) * want.at(i, j);
        }
    }
    return norm == 0.0 ? std::sqrt(diff) : std::sqrt(diff / norm);
}

}  // namespace tilert::reference
