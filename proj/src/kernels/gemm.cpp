#include "surfake/kernels/gemm.hpp"

#include <algorithm>
#include <cstring>

namespace surfake::kernels {
namespace {

constexpr int kColBlock = 512;

}  // namespace

void gemm_nn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(m) * n);
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    int i = 0;
    // Four output rows per pass so each loaded row of B feeds four FMAs.
    for (; i + 4 <= m; i += 4) {
      float* c0 = c + static_cast<std::size_t>(i) * n + j0;
      float* c1 = c0 + n;
      float* c2 = c1 + n;
      float* c3 = c2 + n;
      const float* a0 = a + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const float w0 = a0[p];
        const float w1 = a0[k + p];
        const float w2 = a0[2 * k + p];
        const float w3 = a0[3 * k + p];
        const float* br = b + static_cast<std::size_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) {
          const float v = br[j];
          c0[j] += w0 * v;
          c1[j] += w1 * v;
          c2[j] += w2 * v;
          c3[j] += w3 * v;
        }
      }
    }
    for (; i < m; ++i) {
      float* ci = c + static_cast<std::size_t>(i) * n + j0;
      const float* ai = a + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const float w = ai[p];
        const float* br = b + static_cast<std::size_t>(p) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) ci[j] += w * br[j];
      }
    }
  }
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(float) * static_cast<std::size_t>(k) * n);
  for (int j0 = 0; j0 < n; j0 += kColBlock) {
    const int jn = std::min(kColBlock, n - j0);
    for (int p = 0; p < k; ++p) {
      float* cr = c + static_cast<std::size_t>(p) * n + j0;
      int i = 0;
      for (; i + 4 <= m; i += 4) {
        const float w0 = a[static_cast<std::size_t>(i) * k + p];
        const float w1 = a[static_cast<std::size_t>(i + 1) * k + p];
        const float w2 = a[static_cast<std::size_t>(i + 2) * k + p];
        const float w3 = a[static_cast<std::size_t>(i + 3) * k + p];
        const float* b0 = b + static_cast<std::size_t>(i) * n + j0;
        const float* b1 = b0 + n;
        const float* b2 = b1 + n;
        const float* b3 = b2 + n;
#pragma omp simd
        for (int j = 0; j < jn; ++j) cr[j] += w0 * b0[j] + w1 * b1[j] + w2 * b2[j] + w3 * b3[j];
      }
      for (; i < m; ++i) {
        const float w = a[static_cast<std::size_t>(i) * k + p];
        const float* bi = b + static_cast<std::size_t>(i) * n + j0;
#pragma omp simd
        for (int j = 0; j < jn; ++j) cr[j] += w * bi[j];
      }
    }
  }
}

void gemm_nt_acc(int m, int n, int k, const float* a, const float* b, float* c) {
  for (int i = 0; i < m; ++i) {
    const float* ai = a + static_cast<std::size_t>(i) * n;
    float* ci = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float* bp = b + static_cast<std::size_t>(p) * n;
      float acc = 0.f;
#pragma omp simd reduction(+ : acc)
      for (int j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

}  // namespace surfake::kernels
