#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "surfake/nn/layers.hpp"

namespace surfake::nn {

using StateDict = std::map<std::string, Tensor>;

struct BackboneSpec {
  std::string id;
  int input_side = 224;
  std::array<float, 3> mean{};
  std::array<float, 3> std{};
  int feature_width = 0;
  bool paper_backbone = true;  // false for the desk-scale tinycnn
};

// Throws ConfigError for unknown ids.
const BackboneSpec& backbone_spec(const std::string& id);
std::vector<std::string> backbone_ids();

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> missing;     // in the model, absent from the state
  std::vector<std::string> unexpected;  // in the state, absent from the model
  std::vector<std::string> mismatched;  // present in both with different shapes
};

// Two-class classifier split into a trunk (input -> pooled feature vector)
// and a head (feature vector -> logits).
class Classifier {
 public:
  Classifier(std::string backbone, LayerPtr trunk, LayerPtr head, Conv2d* first_conv,
             Linear* last_linear);

  const std::string& backbone() const { return backbone_; }
  int in_channels() const { return first_conv_->options().in_channels; }
  Conv2d& first_conv() { return *first_conv_; }
  Linear& last_linear() { return *last_linear_; }

  Tensor forward(const Tensor& x, Mode mode);
  // Penultimate activations, always computed in eval mode.
  Tensor features(const Tensor& x);
  // Back-propagates d(loss)/d(logits) of the last forward().
  void backward(const Tensor& grad_logits);

  void visit(const ParamVisitor& fn);
  void zero_grad();
  std::size_t parameter_count();  // trainable elements only

  StateDict state();
  // strict: every name and shape must match exactly. Otherwise matching
  // entries load and the rest are reported.
  LoadReport load_state(const StateDict& state, bool strict);

 private:
  std::string backbone_;
  LayerPtr trunk_;
  LayerPtr head_;
  Conv2d* first_conv_;
  Linear* last_linear_;
};

// Builds a freshly initialized 3-channel network for `id`.
std::unique_ptr<Classifier> build_classifier(const std::string& id, std::uint64_t seed);

}  // namespace surfake::nn
