#pragma once

#include <cstdint>
#include <span>

// Bilinear resampling with half-pixel centers: a destination pixel d maps to
// source coordinate (d + 0.5) * src/dst - 0.5, clamped to the valid range.
// Buffers are interleaved H x W x C. 8-bit outputs round half away from zero.
namespace surfake::kernels {

struct ResizeShape {
  int src_height;
  int src_width;
  int channels;
  int dst_height;
  int dst_width;
};

void resize_bilinear(const ResizeShape& shape, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst);
void resize_bilinear(const ResizeShape& shape, std::span<const float> src,
                     std::span<float> dst);

// Serial per-pixel implementation kept as the test and benchmark baseline.
namespace reference {
void resize_bilinear(const ResizeShape& shape, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst);
void resize_bilinear(const ResizeShape& shape, std::span<const float> src,
                     std::span<float> dst);
}  // namespace reference

}  // namespace surfake::kernels
