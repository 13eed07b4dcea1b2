#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <cstddef>
#include <cstdint>

namespace mast::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

/// C (m x n) [+]= op(A) * op(B), with op(A) m x k and op(B) k x n.
/// A is stored m x k (or k x m when transposed), B k x n (or n x k).
inline void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  MatrixMap C(c, M, N);
  if (!trans_a && !trans_b) {
    ConstMatrixMap A(a, M, K);
    ConstMatrixMap B(b, K, N);
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (trans_a && !trans_b) {
    ConstMatrixMap A(a, K, M);
    ConstMatrixMap B(b, K, N);
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else if (!trans_a && trans_b) {
    ConstMatrixMap A(a, M, K);
    ConstMatrixMap B(b, N, K);
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else {
    ConstMatrixMap A(a, K, M);
    ConstMatrixMap B(b, N, K);
    if (accumulate) C.noalias() += A.transpose() * B.transpose(); else C.noalias() = A.transpose() * B.transpose();
  }
}

/// Forward multiply-accumulate counter (conv, linear, matmul, bmm).
inline std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

}  // namespace mast::detail
