#pragma once

// Thin row-major GEMM wrapper over cblas. Everything else in the library
// stays BLAS-agnostic.

namespace dfn::detail {

// C[m x n] = alpha * A[m x k] (or A^T) * B[k x n] (or B^T) + beta * C
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace dfn::detail
