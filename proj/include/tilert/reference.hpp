#pragma once

#include "tilert/routines.hpp"
#include "tilert/tiling.hpp"

namespace tilert::reference {

// Dense, untiled triple-loop implementations of the level-3 routines. They
// share no code with the tile kernels and serve as the numerical oracle.

void gemm(bool trans_a, bool trans_b, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
          const MatrixDesc& c);
void syrk(Uplo uplo, bool trans, double alpha, const MatrixDesc& a, double beta, const MatrixDesc& c);
void syr2k(Uplo uplo, bool trans, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
           const MatrixDesc& c);
void symm(Side side, Uplo uplo, double alpha, const MatrixDesc& a, const MatrixDesc& b, double beta,
          const MatrixDesc& c);
void trmm(Side side, Uplo uplo, bool trans_a, Diag diag, double alpha, const MatrixDesc& a,
          const MatrixDesc& b);
void trsm(Side side, Uplo uplo, bool trans_a, Diag diag, double alpha, const MatrixDesc& a,
          const MatrixDesc& b);

/// Apply the call's routine to its (bound) operands in place.
void run(const RoutineCall& call);

/// ||got - want||_F / ||want||_F (absolute norm when want is zero).
double relative_frobenius_error(const MatrixDesc& got, const MatrixDesc& want);

}  // namespace tilert::reference
