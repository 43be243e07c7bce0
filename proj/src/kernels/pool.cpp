#include "surfake/kernels/pool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surfake/common/error.hpp"

namespace surfake::kernels {
namespace {

void check(const PoolGeometry& g) {
  if (g.kernel <= 0 || g.stride <= 0 || g.pad < 0 || 2 * g.pad > g.kernel ||
      g.out_height() <= 0 || g.out_width() <= 0) {
    throw InvalidInputError("max_pool: invalid geometry");
  }
}

}  // namespace

void max_pool_forward(const PoolGeometry& g, std::span<const float> input,
                      std::span<float> output, std::span<std::int32_t> argmax) {
  check(g);
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int planes = g.batch * g.channels;
  if (input.size() != static_cast<std::size_t>(planes) * g.in_height * g.in_width ||
      output.size() != static_cast<std::size_t>(planes) * oh * ow || argmax.size() != output.size()) {
    throw InvalidInputError("max_pool: buffer sizes do not match geometry");
  }
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* src = input.data() + static_cast<std::size_t>(p) * g.in_height * g.in_width;
    float* dst = output.data() + static_cast<std::size_t>(p) * oh * ow;
    std::int32_t* arg = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const int y0 = std::max(0, y * g.stride - g.pad);
      const int y1 = std::min(g.in_height, y * g.stride - g.pad + g.kernel);
      for (int x = 0; x < ow; ++x) {
        const int x0 = std::max(0, x * g.stride - g.pad);
        const int x1 = std::min(g.in_width, x * g.stride - g.pad + g.kernel);
        float best = -std::numeric_limits<float>::infinity();
        std::int32_t best_i = y0 * g.in_width + x0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) {
            const float v = src[iy * g.in_width + ix];
            // NaN wins, as in torch, so a poisoned input stays visible.
            if (v > best || (std::isnan(v) && !std::isnan(best))) {
              best = v;
              best_i = iy * g.in_width + ix;
            }
          }
        dst[y * ow + x] = best;
        arg[y * ow + x] = best_i;
      }
    }
  }
}

void max_pool_backward(const PoolGeometry& g, std::span<const float> grad_output,
                       std::span<const std::int32_t> argmax, std::span<float> grad_input) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int planes = g.batch * g.channels;
  std::fill(grad_input.begin(), grad_input.end(), 0.f);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p) {
    const float* dy = grad_output.data() + static_cast<std::size_t>(p) * oh * ow;
    const std::int32_t* arg = argmax.data() + static_cast<std::size_t>(p) * oh * ow;
    float* dx = grad_input.data() + static_cast<std::size_t>(p) * g.in_height * g.in_width;
    for (int i = 0; i < oh * ow; ++i) dx[arg[i]] += dy[i];
  }
}

namespace reference {

void max_pool_forward(const PoolGeometry& g, std::span<const float> input,
                      std::span<float> output) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  for (int p = 0; p < g.batch * g.channels; ++p)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        float best = -std::numeric_limits<float>::infinity();
        for (int ky = 0; ky < g.kernel; ++ky)
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int iy = y * g.stride - g.pad + ky;
            const int ix = x * g.stride - g.pad + kx;
            if (iy < 0 || iy >= g.in_height || ix < 0 || ix >= g.in_width) continue;
            const float v = input[(static_cast<std::size_t>(p) * g.in_height + iy) * g.in_width + ix];
            if (std::isnan(v) || v > best) best = std::isnan(best) ? best : v;
          }
        output[(static_cast<std::size_t>(p) * oh + y) * ow + x] = best;
      }
}

}  // namespace reference
}  // namespace surfake::kernels
