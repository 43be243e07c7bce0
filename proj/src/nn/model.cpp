#include "surfake/nn/model.hpp"

#include <set>

#include "surfake/common/error.hpp"

namespace surfake::nn {

Classifier::Classifier(std::string backbone, LayerPtr trunk, LayerPtr head, Conv2d* first_conv,
                       Linear* last_linear)
    : backbone_(std::move(backbone)),
      trunk_(std::move(trunk)),
      head_(std::move(head)),
      first_conv_(first_conv),
      last_linear_(last_linear) {}

Tensor Classifier::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != in_channels()) {
    throw InvalidInputError(backbone_ + ": expected [N, " + std::to_string(in_channels()) +
                            ", H, W] input, got " + shape_string(x.shape()));
  }
  return head_->forward(trunk_->forward(x, mode), mode);
}

Tensor Classifier::features(const Tensor& x) {
  if (x.rank() != 4 || x.dim(1) != in_channels()) {
    throw InvalidInputError(backbone_ + ": expected [N, " + std::to_string(in_channels()) +
                            ", H, W] input, got " + shape_string(x.shape()));
  }
  return trunk_->forward(x, Mode::kEval);
}

void Classifier::backward(const Tensor& grad_logits) {
  trunk_->backward(head_->backward(grad_logits));
}

void Classifier::visit(const ParamVisitor& fn) {
  trunk_->visit("", fn);
  head_->visit("", fn);
}

void Classifier::zero_grad() {
  visit([](const std::string&, Parameter& p) {
    if (p.trainable) p.grad.fill(0.f);
  });
}

std::size_t Classifier::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Parameter& p) {
    if (p.trainable) n += p.value.size();
  });
  return n;
}

StateDict Classifier::state() {
  StateDict out;
  visit([&](const std::string& name, Parameter& p) {
    if (!out.emplace(name, p.value).second) throw Error("duplicate parameter name " + name);
  });
  return out;
}

LoadReport Classifier::load_state(const StateDict& state, bool strict) {
  LoadReport report;
  std::set<std::string> seen;
  visit([&](const std::string& name, Parameter& p) {
    seen.insert(name);
    const auto it = state.find(name);
    if (it == state.end()) {
      report.missing.push_back(name);
    } else if (it->second.shape() != p.value.shape()) {
      report.mismatched.push_back(name);
    } else {
      report.loaded.push_back(name);
    }
  });
  for (const auto& [name, t] : state) {
    if (!seen.count(name)) report.unexpected.push_back(name);
  }
  if (strict && (!report.missing.empty() || !report.unexpected.empty() || !report.mismatched.empty())) {
    std::string msg = backbone_ + ": state does not match the model";
    if (!report.missing.empty()) msg += "; missing " + report.missing.front();
    if (!report.unexpected.empty()) msg += "; unexpected " + report.unexpected.front();
    if (!report.mismatched.empty()) msg += "; shape mismatch " + report.mismatched.front();
    throw InvalidInputError(msg);
  }
  visit([&](const std::string& name, Parameter& p) {
    const auto it = state.find(name);
    if (it != state.end() && it->second.shape() == p.value.shape()) p.value = it->second;
  });
  return report;
}

}  // namespace surfake::nn
