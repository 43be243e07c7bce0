#include "surfake/kernels/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "surfake/common/error.hpp"

namespace surfake::kernels {
namespace {

struct Tap {
  int i0;
  int i1;
  float w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> make_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[d] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

void check(const ResizeShape& s, std::size_t src_size, std::size_t dst_size) {
  if (s.src_height <= 0 || s.src_width <= 0 || s.dst_height <= 0 || s.dst_width <= 0 ||
      s.channels <= 0) {
    throw InvalidInputError("resize: dimensions must be positive");
  }
  if (src_size != static_cast<std::size_t>(s.src_height) * s.src_width * s.channels ||
      dst_size != static_cast<std::size_t>(s.dst_height) * s.dst_width * s.channels) {
    throw InvalidInputError("resize: buffer size does not match shape");
  }
}

template <typename T, typename Store>
void resize_impl(const ResizeShape& s, std::span<const T> src, std::span<T> dst, Store store) {
  check(s, src.size(), dst.size());
  const auto xt = make_taps(s.src_width, s.dst_width);
  const auto yt = make_taps(s.src_height, s.dst_height);
  const int c = s.channels;
  const std::size_t src_row = static_cast<std::size_t>(s.src_width) * c;
  const std::size_t dst_row = static_cast<std::size_t>(s.dst_width) * c;

#pragma omp parallel for schedule(static)
  for (int y = 0; y < s.dst_height; ++y) {
    const Tap ty = yt[y];
    const T* r0 = src.data() + ty.i0 * src_row;
    const T* r1 = src.data() + ty.i1 * src_row;
    T* out = dst.data() + y * dst_row;
    for (int x = 0; x < s.dst_width; ++x) {
      const Tap tx = xt[x];
      for (int ch = 0; ch < c; ++ch) {
        const float a = static_cast<float>(r0[tx.i0 * c + ch]);
        const float b = static_cast<float>(r0[tx.i1 * c + ch]);
        const float d = static_cast<float>(r1[tx.i0 * c + ch]);
        const float e = static_cast<float>(r1[tx.i1 * c + ch]);
        const float top = a + (b - a) * tx.w1;
        const float bottom = d + (e - d) * tx.w1;
        out[x * c + ch] = store(top + (bottom - top) * ty.w1);
      }
    }
  }
}

}  // namespace

void resize_bilinear(const ResizeShape& shape, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst) {
  resize_impl<std::uint8_t>(shape, src, dst, [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5f), 0.f, 255.f));
  });
}

void resize_bilinear(const ResizeShape& shape, std::span<const float> src,
                     std::span<float> dst) {
  resize_impl<float>(shape, src, dst, [](float v) { return v; });
}

}  // namespace surfake::kernels
