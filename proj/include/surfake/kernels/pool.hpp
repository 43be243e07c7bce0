#pragma once

#include <cstdint>
#include <span>

namespace surfake::kernels {

struct PoolGeometry {
  int batch = 1;
  int channels = 1;
  int in_height = 1;
  int in_width = 1;
  int kernel = 2;
  int stride = 2;
  int pad = 0;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
};

// Padding cells never win the max. argmax receives the flat input offset
// within each (n, c) plane.
void max_pool_forward(const PoolGeometry& g, std::span<const float> input,
                      std::span<float> output, std::span<std::int32_t> argmax);
void max_pool_backward(const PoolGeometry& g, std::span<const float> grad_output,
                       std::span<const std::int32_t> argmax, std::span<float> grad_input);

namespace reference {
void max_pool_forward(const PoolGeometry& g, std::span<const float> input,
                      std::span<float> output);
}  // namespace reference

}  // namespace surfake::kernels
