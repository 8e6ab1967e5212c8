#include "gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace csanet::detail {
namespace {

#if defined(__AVX512F__)
constexpr int kVec = 8;
constexpr int kMr = 8;
constexpr int kNv = 2;
#else
constexpr int kVec = 4;
constexpr int kMr = 4;
constexpr int kNv = 2;
#endif
constexpr int kNr = kVec * kNv;

typedef double vec_t __attribute__((vector_size(kVec * sizeof(double))));

// Panels are zero-padded to full tile width; padded lanes never reach C.
void pack_a(int m, int k, MatView a, std::vector<double>& out) {
  int panels = (m + kMr - 1) / kMr;
  out.assign(static_cast<std::size_t>(panels) * k * kMr, 0.0);
  for (int p = 0; p < panels; ++p) {
    double* dst = out.data() + static_cast<std::size_t>(p) * k * kMr;
    int rows = std::min(kMr, m - p * kMr);
    for (int i = 0; i < rows; ++i) {
      const double* src = a.data + (p * kMr + i) * a.rs;
      for (int kk = 0; kk < k; ++kk) dst[kk * kMr + i] = src[kk * a.cs];
    }
  }
}

void pack_b(int k, int n, MatView b, std::vector<double>& out) {
  int panels = (n + kNr - 1) / kNr;
  out.assign(static_cast<std::size_t>(panels) * k * kNr, 0.0);
  for (int p = 0; p < panels; ++p) {
    double* dst = out.data() + static_cast<std::size_t>(p) * k * kNr;
    int cols = std::min(kNr, n - p * kNr);
    for (int kk = 0; kk < k; ++kk) {
      const double* src = b.data + kk * b.rs + (p * kNr) * b.cs;
      double* row = dst + static_cast<std::size_t>(kk) * kNr;
      if (b.cs == 1) {
        std::memcpy(row, src, sizeof(double) * cols);
      } else {
        for (int j = 0; j < cols; ++j) row[j] = src[j * b.cs];
      }
    }
  }
}

void kernel(int k, const double* pa, const double* pb, double* tile) {
  vec_t acc[kMr][kNv];
  for (int i = 0; i < kMr; ++i)
    for (int v = 0; v < kNv; ++v) acc[i][v] = vec_t{};
  for (int kk = 0; kk < k; ++kk, pa += kMr, pb += kNr) {
    vec_t bv[kNv];
    for (int v = 0; v < kNv; ++v) std::memcpy(&bv[v], pb + v * kVec, sizeof(vec_t));
    for (int i = 0; i < kMr; ++i) {
      vec_t av = vec_t{} + pa[i];
      for (int v = 0; v < kNv; ++v) acc[i][v] += av * bv[v];
    }
  }
  std::memcpy(tile, acc, sizeof(acc));
}

}  // namespace

void gemm(int m, int n, int k, MatView a, MatView b, double* c,
          std::ptrdiff_t ldc, bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    }
    return;
  }
  thread_local std::vector<double> pa;
  thread_local std::vector<double> pb;
  pack_a(m, k, a, pa);
  pack_b(k, n, b, pb);
  alignas(64) double tile[kMr * kNr];
  int mp = (m + kMr - 1) / kMr;
  int np = (n + kNr - 1) / kNr;
  for (int jp = 0; jp < np; ++jp) {
    const double* bpanel = pb.data() + static_cast<std::size_t>(jp) * k * kNr;
    int cols = std::min(kNr, n - jp * kNr);
    for (int ip = 0; ip < mp; ++ip) {
      kernel(k, pa.data() + static_cast<std::size_t>(ip) * k * kMr, bpanel, tile);
      int rows = std::min(kMr, m - ip * kMr);
      for (int i = 0; i < rows; ++i) {
        double* dst = c + (ip * kMr + i) * ldc + jp * kNr;
        const double* src = tile + i * kNr;
        if (accumulate) {
          for (int j = 0; j < cols; ++j) dst[j] += src[j];
        } else {
          std::memcpy(dst, src, sizeof(double) * cols);
        }
      }
    }
  }
}

}  // namespace csanet::detail
