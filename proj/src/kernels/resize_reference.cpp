#include <algorithm>
#include <cmath>

#include "surfake/common/error.hpp"
#include "surfake/kernels/resize.hpp"

namespace surfake::kernels::reference {
namespace {

template <typename T>
double sample(const ResizeShape& s, std::span<const T> src, int dy, int dx, int ch) {
  auto coord = [](int d, int src_n, int dst_n) {
    const double v = (d + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
    return std::min(std::max(v, 0.0), static_cast<double>(src_n - 1));
  };
  const double sy = coord(dy, s.src_height, s.dst_height);
  const double sx = coord(dx, s.src_width, s.dst_width);
  const int y0 = static_cast<int>(sy);
  const int x0 = static_cast<int>(sx);
  const int y1 = std::min(y0 + 1, s.src_height - 1);
  const int x1 = std::min(x0 + 1, s.src_width - 1);
  const double fy = sy - y0;
  const double fx = sx - x0;
  auto px = [&](int y, int x) {
    return static_cast<double>(src[(static_cast<std::size_t>(y) * s.src_width + x) * s.channels + ch]);
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
         fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
}

template <typename T, typename Store>
void run(const ResizeShape& s, std::span<const T> src, std::span<T> dst, Store store) {
  if (src.size() != static_cast<std::size_t>(s.src_height) * s.src_width * s.channels ||
      dst.size() != static_cast<std::size_t>(s.dst_height) * s.dst_width * s.channels) {
    throw InvalidInputError("resize: buffer size does not match shape");
  }
  for (int y = 0; y < s.dst_height; ++y)
    for (int x = 0; x < s.dst_width; ++x)
      for (int c = 0; c < s.channels; ++c)
        dst[(static_cast<std::size_t>(y) * s.dst_width + x) * s.channels + c] =
            store(sample(s, src, y, x, c));
}

}  // namespace

void resize_bilinear(const ResizeShape& shape, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst) {
  run<std::uint8_t>(shape, src, dst, [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
  });
}

void resize_bilinear(const ResizeShape& shape, std::span<const float> src,
                     std::span<float> dst) {
  run<float>(shape, src, dst, [](double v) { return static_cast<float>(v); });
}

}  // namespace surfake::kernels::reference
