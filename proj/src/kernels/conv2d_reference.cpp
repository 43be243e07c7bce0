#include <algorithm>

#include "surfake/common/error.hpp"
#include "surfake/kernels/conv2d.hpp"

// Direct seven-loop convolution straight from the definition.
namespace surfake::kernels::reference {
namespace {

struct Index {
  const ConvGeometry& g;
  std::size_t in(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_height + y) * g.in_width + x;
  }
  std::size_t out(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * g.out_channels + c) * g.out_height() + y) *
               g.out_width() + x;
  }
  std::size_t w(int o, int ci, int ky, int kx) const {
    return ((static_cast<std::size_t>(o) * (g.in_channels / g.groups) + ci) * g.kernel_h + ky) *
               g.kernel_w + kx;
  }
};

template <typename Visit>
void for_each_tap(const ConvGeometry& g, Visit visit) {
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < g.out_height(); ++y)
        for (int x = 0; x < g.out_width(); ++x)
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < g.kernel_h; ++ky)
              for (int kx = 0; kx < g.kernel_w; ++kx) {
                const int iy = y * g.stride - g.pad + ky;
                const int ix = x * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_height || ix < 0 || ix >= g.in_width) continue;
                const int c = (o / cout_g) * cin_g + ci;
                visit(n, o, y, x, c, ci, iy, ix, ky, kx);
              }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output) {
  g.validate();
  if (input.size() != g.input_size() || weight.size() != g.weight_size() ||
      output.size() != g.output_size()) {
    throw InvalidInputError("conv2d: buffer sizes do not match geometry");
  }
  const Index ix{g};
  for (int n = 0; n < g.batch; ++n)
    for (int o = 0; o < g.out_channels; ++o)
      for (int y = 0; y < g.out_height(); ++y)
        for (int x = 0; x < g.out_width(); ++x)
          output[ix.out(n, o, y, x)] = bias.empty() ? 0.f : bias[o];
  for_each_tap(g, [&](int n, int o, int y, int x, int c, int ci, int iy, int jx, int ky, int kx) {
    output[ix.out(n, o, y, x)] += weight[ix.w(o, ci, ky, kx)] * input[ix.in(n, c, iy, jx)];
  });
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const float> grad_output,
                           std::span<const float> weight, std::span<float> grad_input) {
  g.validate();
  const Index ix{g};
  std::fill(grad_input.begin(), grad_input.end(), 0.f);
  for_each_tap(g, [&](int n, int o, int y, int x, int c, int ci, int iy, int jx, int ky, int kx) {
    grad_input[ix.in(n, c, iy, jx)] += weight[ix.w(o, ci, ky, kx)] * grad_output[ix.out(n, o, y, x)];
  });
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, std::span<float> grad_weight,
                            std::span<float> grad_bias) {
  g.validate();
  const Index ix{g};
  for_each_tap(g, [&](int n, int o, int y, int x, int c, int ci, int iy, int jx, int ky, int kx) {
    grad_weight[ix.w(o, ci, ky, kx)] += grad_output[ix.out(n, o, y, x)] * input[ix.in(n, c, iy, jx)];
  });
  if (!grad_bias.empty()) {
    for (int n = 0; n < g.batch; ++n)
      for (int o = 0; o < g.out_channels; ++o)
        for (int y = 0; y < g.out_height(); ++y)
          for (int x = 0; x < g.out_width(); ++x) grad_bias[o] += grad_output[ix.out(n, o, y, x)];
  }
}

}  // namespace surfake::kernels::reference
