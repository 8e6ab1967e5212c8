#pragma once

#include <cstddef>

namespace csanet::detail {

/// Strided read-only matrix view: element (i, j) is at data[i*rs + j*cs].
/// Transposes are expressed by swapping the strides.
struct MatView {
  const double* data;
  std::ptrdiff_t rs;
  std::ptrdiff_t cs;
};

/// C[m x n] = A[m x k] * B[k x n] with C row-major (leading dimension ldc).
/// Each output is accumulated from 0.0 over k in increasing order, one
/// product at a time, so results match a naive triple loop bit-for-bit.
/// When `accumulate` is set the finished sum is added onto C.
void gemm(int m, int n, int k, MatView a, MatView b, double* c,
          std::ptrdiff_t ldc, bool accumulate);

}  // namespace csanet::detail
