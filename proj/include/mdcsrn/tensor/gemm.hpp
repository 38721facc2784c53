#pragma once

#include <Eigen/Core>
#include <cblas.h>

namespace mdcsrn::blas {

// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k,
              alpha, a, lda, b, ldb, beta, c, ldc);
}

// Double goes through Eigen: OpenBLAS 0.3.20's Cooperlake dgemm kernel
// returns wrong products for transposed operands at moderate sizes. Double
// is only used for verification, so the speed difference does not matter.
inline void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Stride = Eigen::OuterStride<>;
  using CMap = Eigen::Map<const Mat, 0, Stride>;
  Eigen::Map<Mat, 0, Stride> C(c, m, n, Stride(ldc));
  if (beta == 0)
    C.setZero();
  else if (beta != 1)
    C *= beta;
  // stored extents of A and B before the optional transpose
  const CMap A(a, trans_a ? k : m, trans_a ? m : k, Stride(lda));
  const CMap B(b, trans_b ? n : k, trans_b ? k : n, Stride(ldb));
  if (!trans_a && !trans_b)
    C.noalias() += alpha * A * B;
  else if (!trans_a)
    C.noalias() += alpha * A * B.transpose();
  else if (!trans_b)
    C.noalias() += alpha * A.transpose() * B;
  else
    C.noalias() += alpha * A.transpose() * B.transpose();
}

}  // namespace mdcsrn::blas
