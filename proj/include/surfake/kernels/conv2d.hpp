#pragma once

#include <cstddef>
#include <span>

// 2-D convolution over NCHW tensors with square symmetric padding and
// channel groups. Weights are laid out (out_channels, in_channels/groups, kh, kw).
//
// The parallel kernels never let two threads accumulate into the same output
// element, and every reduction runs in a fixed order, so results do not depend
// on the OpenMP thread count.
namespace surfake::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_height = 1;
  int in_width = 1;
  int out_channels = 1;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;

  int out_height() const { return (in_height + 2 * pad - kernel_h) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel_w) / stride + 1; }
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t weight_size() const;
  // Throws InvalidInputError on inconsistent settings.
  void validate() const;
};

void conv2d_forward(const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output);
// Overwrites grad_input.
void conv2d_backward_input(const ConvGeometry& g, std::span<const float> grad_output,
                           std::span<const float> weight, std::span<float> grad_input);
// Accumulates into grad_weight and (when non-empty) grad_bias.
void conv2d_backward_params(const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, std::span<float> grad_weight,
                            std::span<float> grad_bias);

namespace reference {
void conv2d_forward(const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const float> grad_output,
                           std::span<const float> weight, std::span<float> grad_input);
void conv2d_backward_params(const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, std::span<float> grad_weight,
                            std::span<float> grad_bias);
}  // namespace reference

}  // namespace surfake::kernels
