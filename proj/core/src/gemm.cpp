#include "gemm.hpp"

#include <Eigen/Core>

namespace dfn::detail {
namespace {

template <typename T>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
               const T* a, int lda, const T* b, int ldb, T beta, T* c,
               int ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  using ConstMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

  ConstMap A(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  ConstMap B(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  Map C(c, m, n, Eigen::OuterStride<>(ldc));

  if (beta == T(0))
    C.setZero();
  else if (beta != T(1))
    C *= beta;

  if (trans_a && trans_b)
    C.noalias() += alpha * (A.transpose() * B.transpose());
  else if (trans_a)
    C.noalias() += alpha * (A.transpose() * B);
  else if (trans_b)
    C.noalias() += alpha * (A * B.transpose());
  else
    C.noalias() += alpha * (A * B);
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace dfn::detail
