#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "surfake/common/rng.hpp"
#include "surfake/common/tensor.hpp"
#include "surfake/kernels/conv2d.hpp"
#include "surfake/kernels/pool.hpp"

// Minimal layer set with explicit forward/backward passes. forward() caches
// what backward() needs; backward() accumulates parameter gradients and
// returns the gradient with respect to the layer input.
namespace surfake::nn {

enum class Mode { kTrain, kEval };

struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;  // false for running statistics

  explicit Parameter(Tensor v, bool is_trainable = true)
      : value(std::move(v)), grad(is_trainable ? Tensor(value.shape()) : Tensor()),
        trainable(is_trainable) {}
  Parameter() = default;
};

using ParamVisitor = std::function<void(const std::string& name, Parameter& param)>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void visit(const std::string& prefix, const ParamVisitor& fn) {
    (void)prefix;
    (void)fn;
  }
};

using LayerPtr = std::unique_ptr<Layer>;

struct ConvOptions {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
  bool bias = false;
};

class Conv2d : public Layer {
 public:
  // Kaiming-normal (fan_out) initialization.
  Conv2d(const ConvOptions& opt, Rng& init);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

  const ConvOptions& options() const { return opt_; }
  Parameter& weight() { return weight_; }
  std::optional<Parameter>& bias() { return bias_; }
  // Replaces the weight with one of shape (out, in_channels/groups, k, k).
  void replace_weight(Tensor weight, int in_channels);

 private:
  kernels::ConvGeometry geometry(const Tensor& x) const;

  ConvOptions opt_;
  Parameter weight_;
  std::optional<Parameter> bias_;
  Tensor input_;
};

class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, float eps = 1e-5f, float momentum = 0.1f);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

 private:
  int channels_;
  float eps_;
  float momentum_;
  Parameter weight_, bias_, running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
  Mode cached_mode_ = Mode::kTrain;
};

enum class ActivationKind { kReLU, kReLU6, kSiLU, kSigmoid };

class Activation : public Layer {
 public:
  explicit Activation(ActivationKind kind) : kind_(kind) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  ActivationKind kind_;
  Tensor input_;
  Tensor output_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int kernel, int stride, int pad) : kernel_(kernel), stride_(stride), pad_(pad) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  int kernel_, stride_, pad_;
  kernels::PoolGeometry geom_;
  std::vector<std::int32_t> argmax_;
  std::vector<int> in_shape_;
};

// [N, C, H, W] -> [N, C]
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> in_shape_;
};

// [N, C, H, W] -> [N, C], maximum over each plane.
class GlobalMaxPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<int> in_shape_;
  std::vector<std::size_t> argmax_;
};

class Linear : public Layer {
 public:
  // Weights ~ N(0, 0.01), zero bias.
  Linear(int in_features, int out_features, Rng& init);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Dropout : public Layer {
 public:
  Dropout(float p, std::uint64_t seed) : p_(p), rng_(seed) {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  float p_;
  Rng rng_;
  std::vector<float> mask_;
};

// Children run in order; parameters are named "<prefix><child>.<param>".
class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::string name, LayerPtr layer);
  template <typename T, typename... Args>
  T& emplace(std::string name, Args&&... args) {
    auto layer = std::make_unique<T>(std::forward<Args>(args)...);
    T& ref = *layer;
    add(std::move(name), std::move(layer));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

  std::size_t size() const { return children_.size(); }
  Layer& child(std::size_t i) { return *children_[i].second; }

 private:
  std::vector<std::pair<std::string, LayerPtr>> children_;
};

// out = post(body(x) + shortcut(x)); a missing shortcut is the identity and a
// missing post-activation is the identity. An empty name flattens the child's
// parameters into the block's own namespace.
class Residual : public Layer {
 public:
  Residual(std::string body_name, LayerPtr body, std::string shortcut_name = {},
           LayerPtr shortcut = nullptr, std::optional<ActivationKind> post = std::nullopt);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

 private:
  std::string body_name_;
  LayerPtr body_;
  std::string shortcut_name_;
  LayerPtr shortcut_;
  std::optional<Activation> post_;
};

// Wraps a layer under a name without adding a residual connection.
class Named : public Layer {
 public:
  Named(std::string name, LayerPtr inner) : name_(std::move(name)), inner_(std::move(inner)) {}
  Tensor forward(const Tensor& x, Mode mode) override { return inner_->forward(x, mode); }
  Tensor backward(const Tensor& g) override { return inner_->backward(g); }
  void visit(const std::string& prefix, const ParamVisitor& fn) override {
    inner_->visit(prefix + name_ + ".", fn);
  }

 private:
  std::string name_;
  LayerPtr inner_;
};

// Channel gating: x * sigmoid(fc2(act(fc1(avgpool(x))))).
class SqueezeExcite : public Layer {
 public:
  SqueezeExcite(int channels, int squeeze_channels, Rng& init);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void visit(const std::string& prefix, const ParamVisitor& fn) override;

 private:
  GlobalAvgPool pool_;
  Conv2d fc1_;
  Activation act_;
  Conv2d fc2_;
  Activation gate_;
  Tensor input_;
  Tensor scale_;
};

}  // namespace surfake::nn
