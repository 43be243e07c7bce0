#include "surfake/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "surfake/common/error.hpp"
#include "surfake/kernels/gemm.hpp"

namespace surfake::nn {
namespace {

void require_rank(const Tensor& x, int rank, const char* who) {
  if (x.rank() != rank) {
    throw InvalidInputError(std::string(who) + ": expected rank " + std::to_string(rank) +
                            " input, got " + shape_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const ConvOptions& opt, Rng& init) : opt_(opt) {
  if (opt.in_channels % opt.groups || opt.out_channels % opt.groups) {
    throw InvalidInputError("Conv2d: channels not divisible by groups");
  }
  Tensor w({opt.out_channels, opt.in_channels / opt.groups, opt.kernel, opt.kernel});
  const double fan_out = static_cast<double>(opt.out_channels) * opt.kernel * opt.kernel / opt.groups;
  const double stddev = std::sqrt(2.0 / fan_out);
  for (float& v : w.values()) v = static_cast<float>(init.normal(0.0, stddev));
  weight_ = Parameter(std::move(w));
  if (opt.bias) bias_.emplace(Tensor({opt.out_channels}));
}

kernels::ConvGeometry Conv2d::geometry(const Tensor& x) const {
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_height = x.dim(2);
  g.in_width = x.dim(3);
  g.out_channels = opt_.out_channels;
  g.kernel_h = g.kernel_w = opt_.kernel;
  g.stride = opt_.stride;
  g.pad = opt_.pad;
  g.groups = opt_.groups;
  return g;
}

Tensor Conv2d::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "Conv2d");
  if (x.dim(1) != opt_.in_channels) {
    throw InvalidInputError("Conv2d: expected " + std::to_string(opt_.in_channels) +
                            " input channels, got " + std::to_string(x.dim(1)));
  }
  const auto g = geometry(x);
  g.validate();
  Tensor y({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, x.values(), weight_.value.values(),
                          bias_ ? bias_->value.values() : std::span<const float>{}, y.values());
  input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const auto g = geometry(input_);
  kernels::conv2d_backward_params(g, input_.values(), grad_out.values(), weight_.grad.values(),
                                  bias_ ? bias_->grad.values() : std::span<float>{});
  Tensor dx(input_.shape());
  kernels::conv2d_backward_input(g, grad_out.values(), weight_.value.values(), dx.values());
  return dx;
}

void Conv2d::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "weight", weight_);
  if (bias_) fn(prefix + "bias", *bias_);
}

void Conv2d::replace_weight(Tensor weight, int in_channels) {
  if (weight.rank() != 4 || weight.dim(0) != opt_.out_channels ||
      weight.dim(1) * opt_.groups != in_channels || weight.dim(2) != opt_.kernel ||
      weight.dim(3) != opt_.kernel) {
    throw InvalidInputError("Conv2d::replace_weight: incompatible shape " + shape_string(weight.shape()));
  }
  opt_.in_channels = in_channels;
  weight_ = Parameter(std::move(weight));
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, float eps, float momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      weight_(Tensor({channels}, 1.f)),
      bias_(Tensor({channels}, 0.f)),
      running_mean_(Tensor({channels}, 0.f), false),
      running_var_(Tensor({channels}, 1.f), false) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  require_rank(x, 4, "BatchNorm2d");
  if (x.dim(1) != channels_) throw InvalidInputError("BatchNorm2d: channel mismatch");
  const int n = x.dim(0);
  const int plane = x.dim(2) * x.dim(3);
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  Tensor y(x.shape());
  xhat_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.f);
  cached_mode_ = mode;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    float mean, inv_std;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * plane;
        for (int i = 0; i < plane; ++i) sum += p[i];
      }
      const double m = sum / count;
      double sq = 0.0;
      for (int b = 0; b < n; ++b) {
        const float* p = x.data() + (static_cast<std::size_t>(b) * channels_ + c) * plane;
        for (int i = 0; i < plane; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const double var = sq / count;
      mean = static_cast<float>(m);
      inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
      inv_std_[c] = inv_std;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_.value[c] = static_cast<float>((1 - momentum_) * running_mean_.value[c] + momentum_ * m);
      running_var_.value[c] = static_cast<float>((1 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_.value[c];
      inv_std = 1.f / std::sqrt(running_var_.value[c] + eps_);
      inv_std_[c] = inv_std;
    }
    const float gamma = weight_.value[c];
    const float beta = bias_.value[c];
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      const float* p = x.data() + off;
      float* q = y.data() + off;
      float* h = xhat_.data() + off;
      for (int i = 0; i < plane; ++i) {
        h[i] = (p[i] - mean) * inv_std;
        q[i] = gamma * h[i] + beta;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  if (xhat_.empty()) throw InvalidInputError("BatchNorm2d::backward without a forward");
  const int n = grad_out.dim(0);
  const int plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(n) * plane;
  Tensor dx(grad_out.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      const float* dy = grad_out.data() + off;
      const float* h = xhat_.data() + off;
      for (int i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * h[i];
      }
    }
    weight_.grad[c] += static_cast<float>(sum_dy_xhat);
    bias_.grad[c] += static_cast<float>(sum_dy);
    // Eval mode normalizes with fixed statistics, so the map is affine.
    const bool affine = cached_mode_ == Mode::kEval;
    const double k = weight_.value[c] * inv_std_[c] / count;
    for (int b = 0; b < n; ++b) {
      const std::size_t off = (static_cast<std::size_t>(b) * channels_ + c) * plane;
      const float* dy = grad_out.data() + off;
      const float* h = xhat_.data() + off;
      float* d = dx.data() + off;
      for (int i = 0; i < plane; ++i) {
        d[i] = static_cast<float>(affine ? k * count * dy[i] : k * (count * dy[i] - sum_dy - h[i] * sum_dy_xhat));
      }
    }
  }
  return dx;
}

void BatchNorm2d::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "weight", weight_);
  fn(prefix + "bias", bias_);
  fn(prefix + "running_mean", running_mean_);
  fn(prefix + "running_var", running_var_);
}

// ------------------------------------------------------------ Activation

Tensor Activation::forward(const Tensor& x, Mode) {
  Tensor y(x.shape());
  const std::size_t n = x.size();
  const float* in = x.data();
  float* out = y.data();
  switch (kind_) {
    // NaN passes through both rectifiers.
    case ActivationKind::kReLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] < 0.f ? 0.f : in[i];
      break;
    case ActivationKind::kReLU6:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] < 0.f ? 0.f : (in[i] > 6.f ? 6.f : in[i]);
      break;
    case ActivationKind::kSiLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = in[i] / (1.f + std::exp(-in[i]));
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = 1.f / (1.f + std::exp(-in[i]));
      break;
  }
  input_ = x;
  output_ = y;
  return y;
}

Tensor Activation::backward(const Tensor& grad_out) {
  Tensor dx(grad_out.shape());
  const std::size_t n = dx.size();
  const float* x = input_.data();
  const float* y = output_.data();
  const float* dy = grad_out.data();
  float* d = dx.data();
  switch (kind_) {
    case ActivationKind::kReLU:
      for (std::size_t i = 0; i < n; ++i) d[i] = x[i] > 0.f ? dy[i] : 0.f;
      break;
    case ActivationKind::kReLU6:
      for (std::size_t i = 0; i < n; ++i) d[i] = (x[i] > 0.f && x[i] < 6.f) ? dy[i] : 0.f;
      break;
    case ActivationKind::kSiLU:
      for (std::size_t i = 0; i < n; ++i) {
        const float s = 1.f / (1.f + std::exp(-x[i]));
        d[i] = dy[i] * s * (1.f + x[i] * (1.f - s));
      }
      break;
    case ActivationKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) d[i] = dy[i] * y[i] * (1.f - y[i]);
      break;
  }
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "MaxPool2d");
  geom_ = {x.dim(0), x.dim(1), x.dim(2), x.dim(3), kernel_, stride_, pad_};
  Tensor y({x.dim(0), x.dim(1), geom_.out_height(), geom_.out_width()});
  argmax_.assign(y.size(), 0);
  kernels::max_pool_forward(geom_, x.values(), y.values(), argmax_);
  in_shape_ = x.shape();
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  kernels::max_pool_backward(geom_, grad_out.values(), argmax_, dx.values());
  return dx;
}

// --------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "GlobalAvgPool");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n * c; ++i) {
    const float* p = x.data() + static_cast<std::size_t>(i) * plane;
    double s = 0.0;
    for (int j = 0; j < plane; ++j) s += p[j];
    y[i] = static_cast<float>(s / plane);
  }
  in_shape_ = x.shape();
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  const int plane = in_shape_[2] * in_shape_[3];
  const int nc = in_shape_[0] * in_shape_[1];
  for (int i = 0; i < nc; ++i) {
    const float g = grad_out[i] / plane;
    std::fill(dx.data() + static_cast<std::size_t>(i) * plane,
              dx.data() + static_cast<std::size_t>(i + 1) * plane, g);
  }
  return dx;
}

// --------------------------------------------------------- GlobalMaxPool

Tensor GlobalMaxPool::forward(const Tensor& x, Mode) {
  require_rank(x, 4, "GlobalMaxPool");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  argmax_.assign(static_cast<std::size_t>(n) * c, 0);
  for (int i = 0; i < n * c; ++i) {
    const float* p = x.data() + static_cast<std::size_t>(i) * plane;
    std::size_t best = 0;
    for (int j = 1; j < plane && !std::isnan(p[best]); ++j)
      if (p[j] > p[best] || std::isnan(p[j])) best = static_cast<std::size_t>(j);
    y[i] = p[best];
    argmax_[i] = static_cast<std::size_t>(i) * plane + best;
  }
  in_shape_ = x.shape();
  return y;
}

Tensor GlobalMaxPool::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < argmax_.size(); ++i) dx[argmax_[i]] = grad_out[i];
  return dx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, Rng& init)
    : in_(in_features),
      out_(out_features),
      weight_(Tensor({out_features, in_features})),
      bias_(Tensor({out_features})) {
  for (float& v : weight_.value.values()) v = static_cast<float>(init.normal(0.0, 0.01));
}

Tensor Linear::forward(const Tensor& x, Mode) {
  require_rank(x, 2, "Linear");
  if (x.dim(1) != in_) throw InvalidInputError("Linear: feature size mismatch");
  const int n = x.dim(0);
  Tensor y({n, out_});
  for (int i = 0; i < n; ++i)
    std::copy(bias_.value.data(), bias_.value.data() + out_, y.data() + static_cast<std::size_t>(i) * out_);
  kernels::gemm_nt_acc(n, in_, out_, x.data(), weight_.value.data(), y.data());
  input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int n = grad_out.dim(0);
  Tensor dx({n, in_});
  kernels::gemm_nn(n, in_, out_, grad_out.data(), weight_.value.data(), dx.data(), false);
  kernels::gemm_tn(n, in_, out_, grad_out.data(), input_.data(), weight_.grad.data(), true);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_; ++o) bias_.grad[o] += grad_out[static_cast<std::size_t>(i) * out_ + o];
  return dx;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + "weight", weight_);
  fn(prefix + "bias", bias_);
}

// ---------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::kEval || p_ <= 0.f) {
    mask_.clear();
    return x;
  }
  Tensor y(x.shape());
  mask_.resize(x.size());
  const float keep = 1.f - p_;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng_.uniform() < keep ? 1.f / keep : 0.f;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  if (mask_.empty()) return grad_out;
  Tensor dx(grad_out.shape());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = grad_out[i] * mask_[i];
  return dx;
}

// ------------------------------------------------------------- Sequential

Sequential& Sequential::add(std::string name, LayerPtr layer) {
  children_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor h = x;
  for (auto& [name, layer] : children_) h = layer->forward(h, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g);
  return g;
}

void Sequential::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (auto& [name, layer] : children_) layer->visit(prefix + name + ".", fn);
}

// --------------------------------------------------------------- Residual

Residual::Residual(std::string body_name, LayerPtr body, std::string shortcut_name,
                   LayerPtr shortcut, std::optional<ActivationKind> post)
    : body_name_(std::move(body_name)),
      body_(std::move(body)),
      shortcut_name_(std::move(shortcut_name)),
      shortcut_(std::move(shortcut)) {
  if (post) post_.emplace(*post);
}

Tensor Residual::forward(const Tensor& x, Mode mode) {
  Tensor y = body_->forward(x, mode);
  const Tensor s = shortcut_ ? shortcut_->forward(x, mode) : x;
  if (y.shape() != s.shape()) {
    throw InvalidInputError("Residual: branch shapes differ " + shape_string(y.shape()) + " vs " +
                            shape_string(s.shape()));
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
  return post_ ? post_->forward(y, mode) : y;
}

Tensor Residual::backward(const Tensor& grad_out) {
  const Tensor g = post_ ? post_->backward(grad_out) : grad_out;
  Tensor dx = body_->backward(g);
  const Tensor ds = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ds[i];
  return dx;
}

void Residual::visit(const std::string& prefix, const ParamVisitor& fn) {
  body_->visit(body_name_.empty() ? prefix : prefix + body_name_ + ".", fn);
  if (shortcut_) shortcut_->visit(shortcut_name_.empty() ? prefix : prefix + shortcut_name_ + ".", fn);
}

// ---------------------------------------------------------- SqueezeExcite

SqueezeExcite::SqueezeExcite(int channels, int squeeze_channels, Rng& init)
    : fc1_({channels, squeeze_channels, 1, 1, 0, 1, true}, init),
      act_(ActivationKind::kSiLU),
      fc2_({squeeze_channels, channels, 1, 1, 0, 1, true}, init),
      gate_(ActivationKind::kSigmoid) {}

Tensor SqueezeExcite::forward(const Tensor& x, Mode mode) {
  require_rank(x, 4, "SqueezeExcite");
  const int n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor s = pool_.forward(x, mode).reshaped({n, c, 1, 1});
  s = gate_.forward(fc2_.forward(act_.forward(fc1_.forward(s, mode), mode), mode), mode);
  Tensor y(x.shape());
  for (int i = 0; i < n * c; ++i) {
    const float g = s[i];
    const float* p = x.data() + static_cast<std::size_t>(i) * plane;
    float* q = y.data() + static_cast<std::size_t>(i) * plane;
    for (int j = 0; j < plane; ++j) q[j] = p[j] * g;
  }
  input_ = x;
  scale_ = s;
  return y;
}

Tensor SqueezeExcite::backward(const Tensor& grad_out) {
  const int n = input_.dim(0), c = input_.dim(1), plane = input_.dim(2) * input_.dim(3);
  Tensor dx(input_.shape());
  Tensor dscale({n, c, 1, 1});
  for (int i = 0; i < n * c; ++i) {
    const float g = scale_[i];
    const float* dy = grad_out.data() + static_cast<std::size_t>(i) * plane;
    const float* p = input_.data() + static_cast<std::size_t>(i) * plane;
    float* d = dx.data() + static_cast<std::size_t>(i) * plane;
    double acc = 0.0;
    for (int j = 0; j < plane; ++j) {
      d[j] = dy[j] * g;
      acc += dy[j] * p[j];
    }
    dscale[i] = static_cast<float>(acc);
  }
  Tensor ds = fc1_.backward(act_.backward(fc2_.backward(gate_.backward(dscale))));
  const Tensor dpool = pool_.backward(ds.reshaped({n, c}));
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dpool[i];
  return dx;
}

void SqueezeExcite::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1_.visit(prefix + "fc1.", fn);
  fc2_.visit(prefix + "fc2.", fn);
}

}  // namespace surfake::nn
