#include "surfake/kernels/conv2d.hpp"

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "surfake/common/error.hpp"
#include "surfake/kernels/gemm.hpp"

namespace surfake::kernels {

std::size_t ConvGeometry::input_size() const {
  return static_cast<std::size_t>(batch) * in_channels * in_height * in_width;
}
std::size_t ConvGeometry::output_size() const {
  return static_cast<std::size_t>(batch) * out_channels * out_height() * out_width();
}
std::size_t ConvGeometry::weight_size() const {
  return static_cast<std::size_t>(out_channels) * (in_channels / groups) * kernel_h * kernel_w;
}

void ConvGeometry::validate() const {
  if (batch <= 0 || in_channels <= 0 || out_channels <= 0 || in_height <= 0 || in_width <= 0 ||
      kernel_h <= 0 || kernel_w <= 0 || stride <= 0 || pad < 0 || groups <= 0) {
    throw InvalidInputError("conv2d: non-positive geometry");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw InvalidInputError("conv2d: channels not divisible by groups");
  }
  if (out_height() <= 0 || out_width() <= 0) {
    throw InvalidInputError("conv2d: input " + std::to_string(in_height) + "x" +
                            std::to_string(in_width) + " too small for kernel");
  }
}

namespace {

void check_sizes(const ConvGeometry& g, std::size_t in, std::size_t w, std::size_t out) {
  g.validate();
  if (in != g.input_size() || w != g.weight_size() || out != g.output_size()) {
    throw InvalidInputError("conv2d: buffer sizes do not match geometry");
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.pad == 0;
}

bool is_depthwise(const ConvGeometry& g) {
  return g.groups == g.in_channels && g.groups == g.out_channels && g.groups > 1;
}

// Unfolds channels [c0, c0+cn) of one image into rows of (c, kh, kw) and
// columns of output positions.
void im2col(const ConvGeometry& g, const float* image, int c0, int cn, float* col) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int plane = g.in_height * g.in_width;
  for (int c = 0; c < cn; ++c) {
    const float* src = image + static_cast<std::size_t>(c0 + c) * plane;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        float* dst = col + (static_cast<std::size_t>(c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          float* row = dst + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= g.in_height) {
            std::fill(row, row + ow, 0.f);
            continue;
          }
          const float* srow = src + static_cast<std::size_t>(iy) * g.in_width;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            row[x] = (ix >= 0 && ix < g.in_width) ? srow[ix] : 0.f;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const float* col, int c0, int cn, float* image) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int plane = g.in_height * g.in_width;
  for (int c = 0; c < cn; ++c) {
    float* dst = image + static_cast<std::size_t>(c0 + c) * plane;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const float* src = col + (static_cast<std::size_t>(c * g.kernel_h + ky) * g.kernel_w + kx) * oh * ow;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_height) continue;
          float* drow = dst + static_cast<std::size_t>(iy) * g.in_width;
          const float* srow = src + static_cast<std::size_t>(y) * ow;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_width) drow[ix] += srow[x];
          }
        }
      }
    }
  }
}

// Depthwise kernels: one filter per channel, direct loops.
void depthwise_forward(const ConvGeometry& g, const float* in, const float* w, const float* bias,
                       float* out) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int C = g.in_channels;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* src = in + (static_cast<std::size_t>(n) * C + c) * g.in_height * g.in_width;
      const float* wc = w + static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w;
      float* dst = out + (static_cast<std::size_t>(n) * C + c) * oh * ow;
      const float b = bias ? bias[c] : 0.f;
      std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, b);
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          const float wv = wc[ky * g.kernel_w + kx];
          const int x_lo = std::max(0, (g.pad - kx + g.stride - 1) / g.stride);
          const int x_hi = std::min(ow, (g.in_width + g.pad - kx + g.stride - 1) / g.stride);
          for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_height) continue;
            const float* srow = src + static_cast<std::size_t>(iy) * g.in_width;
            float* drow = dst + static_cast<std::size_t>(y) * ow;
            if (g.stride == 1) {
              const int off = kx - g.pad;
#pragma omp simd
              for (int x = x_lo; x < x_hi; ++x) drow[x] += wv * srow[x + off];
            } else {
              for (int x = x_lo; x < x_hi; ++x) drow[x] += wv * srow[x * g.stride - g.pad + kx];
            }
          }
        }
      }
    }
  }
}

void depthwise_backward_input(const ConvGeometry& g, const float* dy, const float* w, float* dx) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int C = g.in_channels;
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* src = dy + (static_cast<std::size_t>(n) * C + c) * oh * ow;
      const float* wc = w + static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w;
      float* dst = dx + (static_cast<std::size_t>(n) * C + c) * g.in_height * g.in_width;
      std::fill(dst, dst + static_cast<std::size_t>(g.in_height) * g.in_width, 0.f);
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          const float wv = wc[ky * g.kernel_w + kx];
          const int x_lo = std::max(0, (g.pad - kx + g.stride - 1) / g.stride);
          const int x_hi = std::min(ow, (g.in_width + g.pad - kx + g.stride - 1) / g.stride);
          for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_height) continue;
            float* drow = dst + static_cast<std::size_t>(iy) * g.in_width;
            const float* srow = src + static_cast<std::size_t>(y) * ow;
            for (int x = x_lo; x < x_hi; ++x) drow[x * g.stride - g.pad + kx] += wv * srow[x];
          }
        }
      }
    }
  }
}

void depthwise_backward_params(const ConvGeometry& g, const float* in, const float* dy, float* dw,
                               float* db) {
  const int oh = g.out_height();
  const int ow = g.out_width();
  const int C = g.in_channels;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    float* wc = dw + static_cast<std::size_t>(c) * g.kernel_h * g.kernel_w;
    for (int n = 0; n < g.batch; ++n) {
      const float* src = in + (static_cast<std::size_t>(n) * C + c) * g.in_height * g.in_width;
      const float* grad = dy + (static_cast<std::size_t>(n) * C + c) * oh * ow;
      if (db) {
        float acc = 0.f;
        for (int i = 0; i < oh * ow; ++i) acc += grad[i];
        db[c] += acc;
      }
      for (int ky = 0; ky < g.kernel_h; ++ky) {
        for (int kx = 0; kx < g.kernel_w; ++kx) {
          const int x_lo = std::max(0, (g.pad - kx + g.stride - 1) / g.stride);
          const int x_hi = std::min(ow, (g.in_width + g.pad - kx + g.stride - 1) / g.stride);
          float acc = 0.f;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.in_height) continue;
            const float* srow = src + static_cast<std::size_t>(iy) * g.in_width;
            const float* grow = grad + static_cast<std::size_t>(y) * ow;
            for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x * g.stride - g.pad + kx];
          }
          wc[ky * g.kernel_w + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const float> input,
                    std::span<const float> weight, std::span<const float> bias,
                    std::span<float> output) {
  check_sizes(g, input.size(), weight.size(), output.size());
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.out_channels)) {
    throw InvalidInputError("conv2d: bias size mismatch");
  }
  const float* bptr = bias.empty() ? nullptr : bias.data();
  if (is_depthwise(g)) {
    depthwise_forward(g, input.data(), weight.data(), bptr, output.data());
    return;
  }
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  const int kdim = cin_g * g.kernel_h * g.kernel_w;
  const int positions = g.out_height() * g.out_width();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const bool pointwise = is_pointwise(g);

#pragma omp parallel
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * positions);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        const float* image = input.data() + static_cast<std::size_t>(n) * g.in_channels * in_plane;
        const float* cols;
        if (pointwise) {
          cols = image + static_cast<std::size_t>(grp) * cin_g * in_plane;
        } else {
          im2col(g, image, grp * cin_g, cin_g, col.data());
          cols = col.data();
        }
        float* out = output.data() +
                     (static_cast<std::size_t>(n) * g.out_channels + grp * cout_g) * positions;
        const float* w = weight.data() + static_cast<std::size_t>(grp) * cout_g * kdim;
        if (bptr) {
          for (int o = 0; o < cout_g; ++o)
            std::fill(out + static_cast<std::size_t>(o) * positions,
                      out + static_cast<std::size_t>(o + 1) * positions, bptr[grp * cout_g + o]);
        }
        gemm_nn(cout_g, positions, kdim, w, cols, out, bptr != nullptr);
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const float> grad_output,
                           std::span<const float> weight, std::span<float> grad_input) {
  check_sizes(g, grad_input.size(), weight.size(), grad_output.size());
  if (is_depthwise(g)) {
    depthwise_backward_input(g, grad_output.data(), weight.data(), grad_input.data());
    return;
  }
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  const int kdim = cin_g * g.kernel_h * g.kernel_w;
  const int positions = g.out_height() * g.out_width();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const bool pointwise = is_pointwise(g);

#pragma omp parallel
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) * positions);
#pragma omp for collapse(2) schedule(static)
    for (int n = 0; n < g.batch; ++n) {
      for (int grp = 0; grp < g.groups; ++grp) {
        float* image = grad_input.data() + static_cast<std::size_t>(n) * g.in_channels * in_plane;
        const float* dy = grad_output.data() +
                          (static_cast<std::size_t>(n) * g.out_channels + grp * cout_g) * positions;
        const float* w = weight.data() + static_cast<std::size_t>(grp) * cout_g * kdim;
        if (pointwise) {
          gemm_tn(cout_g, positions, kdim, w, dy,
                  image + static_cast<std::size_t>(grp) * cin_g * in_plane, false);
        } else {
          gemm_tn(cout_g, positions, kdim, w, dy, col.data(), false);
          float* planes = image + static_cast<std::size_t>(grp) * cin_g * in_plane;
          std::fill(planes, planes + cin_g * in_plane, 0.f);
          col2im_add(g, col.data(), grp * cin_g, cin_g, image);
        }
      }
    }
  }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const float> input,
                            std::span<const float> grad_output, std::span<float> grad_weight,
                            std::span<float> grad_bias) {
  check_sizes(g, input.size(), grad_weight.size(), grad_output.size());
  if (!grad_bias.empty() && grad_bias.size() != static_cast<std::size_t>(g.out_channels)) {
    throw InvalidInputError("conv2d: bias size mismatch");
  }
  float* db = grad_bias.empty() ? nullptr : grad_bias.data();
  if (is_depthwise(g)) {
    depthwise_backward_params(g, input.data(), grad_output.data(), grad_weight.data(), db);
    return;
  }
  const int cin_g = g.in_channels / g.groups;
  const int cout_g = g.out_channels / g.groups;
  const int kdim = cin_g * g.kernel_h * g.kernel_w;
  const int positions = g.out_height() * g.out_width();
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const bool pointwise = is_pointwise(g);
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(g.in_channels / g.groups) *
                                             g.kernel_h * g.kernel_w * positions * g.groups);

  // Samples are visited in order; within a sample each thread owns whole rows
  // of grad_weight, so the accumulation order is fixed.
  for (int n = 0; n < g.batch; ++n) {
    const float* image = input.data() + static_cast<std::size_t>(n) * g.in_channels * in_plane;
    if (!pointwise) {
#pragma omp parallel for schedule(static)
      for (int grp = 0; grp < g.groups; ++grp) {
        im2col(g, image, grp * cin_g, cin_g,
               col.data() + static_cast<std::size_t>(grp) * kdim * positions);
      }
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int grp = 0; grp < g.groups; ++grp) {
      for (int o = 0; o < cout_g; ++o) {
        const float* cols = pointwise
                                ? image + static_cast<std::size_t>(grp) * cin_g * in_plane
                                : col.data() + static_cast<std::size_t>(grp) * kdim * positions;
        const int oc = grp * cout_g + o;
        const float* dy =
            grad_output.data() + (static_cast<std::size_t>(n) * g.out_channels + oc) * positions;
        gemm_nt_acc(1, positions, kdim, dy, cols,
                    grad_weight.data() + static_cast<std::size_t>(oc) * kdim);
        if (db) {
          float acc = 0.f;
          for (int p = 0; p < positions; ++p) acc += dy[p];
          db[oc] += acc;
        }
      }
    }
  }
}

}  // namespace surfake::kernels
