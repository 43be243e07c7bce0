#include <algorithm>

#include "surfake/common/error.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/nn/model.hpp"

namespace surfake::nn {
namespace {

constexpr std::array<float, 3> kImagenetMean{0.485f, 0.456f, 0.406f};
constexpr std::array<float, 3> kImagenetStd{0.229f, 0.224f, 0.225f};
constexpr std::array<float, 3> kHalf{0.5f, 0.5f, 0.5f};

const std::vector<BackboneSpec>& registry() {
  static const std::vector<BackboneSpec> specs = {
      {"resnet50", 224, kImagenetMean, kImagenetStd, 2048, true},
      {"mobilenetv2", 224, kImagenetMean, kImagenetStd, 1280, true},
      {"efficientnet_b0", 224, kImagenetMean, kImagenetStd, 1280, true},
      {"xception", 299, kHalf, kHalf, 2048, true},
      {"tinycnn", 224, kImagenetMean, kImagenetStd, 96, false},
  };
  return specs;
}

// Shared state while assembling a network.
struct Builder {
  Rng init;
  std::uint64_t dropout_seed;
  Conv2d* first_conv = nullptr;
  Linear* last_linear = nullptr;

  Conv2d& conv(Sequential& seq, const std::string& name, const ConvOptions& opt) {
    Conv2d& c = seq.emplace<Conv2d>(name, opt, init);
    if (!first_conv) first_conv = &c;
    return c;
  }
  Linear& linear(Sequential& seq, const std::string& name, int in, int out) {
    Linear& l = seq.emplace<Linear>(name, in, out, init);
    last_linear = &l;
    return l;
  }
};

ConvOptions conv_opt(int in, int out, int k, int stride = 1, int groups = 1, bool bias = false) {
  return {in, out, k, stride, (k - 1) / 2, groups, bias};
}

// conv -> bn [-> act], named "0", "1" inside `parent` under `name`.
void conv_norm_act(Builder& b, Sequential& parent, const std::string& name, const ConvOptions& opt,
                   std::optional<ActivationKind> act) {
  auto seq = std::make_unique<Sequential>();
  b.conv(*seq, "0", opt);
  seq->emplace<BatchNorm2d>("1", opt.out_channels);
  if (act) seq->emplace<Activation>("2", *act);
  parent.add(name, std::move(seq));
}

// ---------------------------------------------------------------- resnet50

LayerPtr bottleneck(Builder& b, int in, int width, int stride) {
  const int out = width * 4;
  auto body = std::make_unique<Sequential>();
  b.conv(*body, "conv1", conv_opt(in, width, 1));
  body->emplace<BatchNorm2d>("bn1", width);
  body->emplace<Activation>("relu1", ActivationKind::kReLU);
  b.conv(*body, "conv2", conv_opt(width, width, 3, stride));
  body->emplace<BatchNorm2d>("bn2", width);
  body->emplace<Activation>("relu2", ActivationKind::kReLU);
  b.conv(*body, "conv3", conv_opt(width, out, 1));
  body->emplace<BatchNorm2d>("bn3", out);
  LayerPtr shortcut;
  if (stride != 1 || in != out) {
    auto down = std::make_unique<Sequential>();
    b.conv(*down, "0", conv_opt(in, out, 1, stride));
    down->emplace<BatchNorm2d>("1", out);
    shortcut = std::move(down);
  }
  return std::make_unique<Residual>("", std::move(body), "downsample", std::move(shortcut),
                                    ActivationKind::kReLU);
}

std::unique_ptr<Classifier> build_resnet50(Builder& b) {
  auto trunk = std::make_unique<Sequential>();
  b.conv(*trunk, "conv1", {3, 64, 7, 2, 3, 1, false});
  trunk->emplace<BatchNorm2d>("bn1", 64);
  trunk->emplace<Activation>("relu", ActivationKind::kReLU);
  trunk->emplace<MaxPool2d>("maxpool", 3, 2, 1);
  const int blocks[4] = {3, 4, 6, 3};
  int in = 64;
  for (int stage = 0; stage < 4; ++stage) {
    const int width = 64 << stage;
    auto layer = std::make_unique<Sequential>();
    for (int i = 0; i < blocks[stage]; ++i) {
      layer->add(std::to_string(i), bottleneck(b, in, width, (i == 0 && stage > 0) ? 2 : 1));
      in = width * 4;
    }
    trunk->add("layer" + std::to_string(stage + 1), std::move(layer));
  }
  trunk->emplace<GlobalAvgPool>("avgpool");
  auto head = std::make_unique<Sequential>();
  b.linear(*head, "fc", 2048, 2);
  return std::make_unique<Classifier>("resnet50", std::move(trunk), std::move(head), b.first_conv,
                                      b.last_linear);
}

// ------------------------------------------------------------- mobilenetv2

LayerPtr inverted_residual(Builder& b, int in, int out, int stride, int expand) {
  const int hidden = in * expand;
  auto conv = std::make_unique<Sequential>();
  int idx = 0;
  if (expand != 1) conv_norm_act(b, *conv, std::to_string(idx++), conv_opt(in, hidden, 1), ActivationKind::kReLU6);
  conv_norm_act(b, *conv, std::to_string(idx++), conv_opt(hidden, hidden, 3, stride, hidden),
                ActivationKind::kReLU6);
  b.conv(*conv, std::to_string(idx++), conv_opt(hidden, out, 1));
  conv->emplace<BatchNorm2d>(std::to_string(idx++), out);
  if (stride == 1 && in == out) return std::make_unique<Residual>("conv", std::move(conv));
  return std::make_unique<Named>("conv", std::move(conv));
}

std::unique_ptr<Classifier> build_mobilenetv2(Builder& b) {
  struct Stage { int t, c, n, s; };
  const Stage stages[] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                          {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
  auto features = std::make_unique<Sequential>();
  int idx = 0;
  conv_norm_act(b, *features, std::to_string(idx++), conv_opt(3, 32, 3, 2), ActivationKind::kReLU6);
  int in = 32;
  for (const auto& st : stages) {
    for (int i = 0; i < st.n; ++i) {
      features->add(std::to_string(idx++), inverted_residual(b, in, st.c, i == 0 ? st.s : 1, st.t));
      in = st.c;
    }
  }
  conv_norm_act(b, *features, std::to_string(idx++), conv_opt(in, 1280, 1), ActivationKind::kReLU6);
  auto trunk = std::make_unique<Sequential>();
  trunk->add("features", std::move(features));
  trunk->emplace<GlobalAvgPool>("pool");
  auto classifier = std::make_unique<Sequential>();
  classifier->emplace<Dropout>("0", 0.2f, b.dropout_seed);
  b.linear(*classifier, "1", 1280, 2);
  auto head = std::make_unique<Sequential>();
  head->add("classifier", std::move(classifier));
  return std::make_unique<Classifier>("mobilenetv2", std::move(trunk), std::move(head), b.first_conv,
                                      b.last_linear);
}

// --------------------------------------------------------- efficientnet_b0

// Stochastic depth is omitted: with no shortcut drop the block is the
// inference-time network in both modes.
LayerPtr mbconv(Builder& b, int in, int out, int kernel, int stride, int expand) {
  const int hidden = in * expand;
  auto block = std::make_unique<Sequential>();
  int idx = 0;
  if (expand != 1) conv_norm_act(b, *block, std::to_string(idx++), conv_opt(in, hidden, 1), ActivationKind::kSiLU);
  conv_norm_act(b, *block, std::to_string(idx++), conv_opt(hidden, hidden, kernel, stride, hidden),
                ActivationKind::kSiLU);
  block->emplace<SqueezeExcite>(std::to_string(idx++), hidden, std::max(1, in / 4), b.init);
  conv_norm_act(b, *block, std::to_string(idx++), conv_opt(hidden, out, 1), std::nullopt);
  if (stride == 1 && in == out) return std::make_unique<Residual>("block", std::move(block));
  return std::make_unique<Named>("block", std::move(block));
}

std::unique_ptr<Classifier> build_efficientnet_b0(Builder& b) {
  struct Stage { int expand, kernel, stride, in, out, layers; };
  const Stage stages[] = {{1, 3, 1, 32, 16, 1},   {6, 3, 2, 16, 24, 2},   {6, 5, 2, 24, 40, 2},
                          {6, 3, 2, 40, 80, 3},   {6, 5, 1, 80, 112, 3},  {6, 5, 2, 112, 192, 4},
                          {6, 3, 1, 192, 320, 1}};
  auto features = std::make_unique<Sequential>();
  conv_norm_act(b, *features, "0", conv_opt(3, 32, 3, 2), ActivationKind::kSiLU);
  int idx = 1;
  for (const auto& st : stages) {
    auto stage = std::make_unique<Sequential>();
    for (int i = 0; i < st.layers; ++i) {
      stage->add(std::to_string(i), mbconv(b, i == 0 ? st.in : st.out, st.out, st.kernel,
                                            i == 0 ? st.stride : 1, st.expand));
    }
    features->add(std::to_string(idx++), std::move(stage));
  }
  conv_norm_act(b, *features, std::to_string(idx), conv_opt(320, 1280, 1), ActivationKind::kSiLU);
  auto trunk = std::make_unique<Sequential>();
  trunk->add("features", std::move(features));
  trunk->emplace<GlobalAvgPool>("avgpool");
  auto classifier = std::make_unique<Sequential>();
  classifier->emplace<Dropout>("0", 0.2f, b.dropout_seed);
  b.linear(*classifier, "1", 1280, 2);
  auto head = std::make_unique<Sequential>();
  head->add("classifier", std::move(classifier));
  return std::make_unique<Classifier>("efficientnet_b0", std::move(trunk), std::move(head),
                                      b.first_conv, b.last_linear);
}

// ---------------------------------------------------------------- xception

void separable(Builder& b, Sequential& parent, const std::string& name, int in, int out) {
  auto sep = std::make_unique<Sequential>();
  b.conv(*sep, "conv1", conv_opt(in, in, 3, 1, in));
  b.conv(*sep, "pointwise", conv_opt(in, out, 1));
  parent.add(name, std::move(sep));
}

LayerPtr xception_block(Builder& b, int in, int out, int reps, int stride, bool start_with_relu,
                        bool grow_first) {
  // Mirror the reference construction: build the list, then drop the
  // leading ReLU when the block does not start with one.
  struct Unit { int in, out; };
  std::vector<Unit> units;
  int filters = in;
  if (grow_first) {
    units.push_back({in, out});
    filters = out;
  }
  for (int i = 0; i < reps - 1; ++i) units.push_back({filters, filters});
  if (!grow_first) units.push_back({in, out});

  auto rep = std::make_unique<Sequential>();
  int idx = 0;
  bool first = true;
  for (const auto& u : units) {
    if (!first || start_with_relu) rep->emplace<Activation>(std::to_string(idx++), ActivationKind::kReLU);
    first = false;
    separable(b, *rep, std::to_string(idx++), u.in, u.out);
    rep->emplace<BatchNorm2d>(std::to_string(idx++), u.out);
  }
  if (stride != 1) rep->emplace<MaxPool2d>(std::to_string(idx++), 3, stride, 1);

  LayerPtr shortcut;
  if (out != in || stride != 1) {
    auto skip = std::make_unique<Sequential>();
    b.conv(*skip, "skip", {in, out, 1, stride, 0, 1, false});
    skip->emplace<BatchNorm2d>("skipbn", out);
    shortcut = std::move(skip);
  }
  return std::make_unique<Residual>("rep", std::move(rep), "", std::move(shortcut));
}

std::unique_ptr<Classifier> build_xception(Builder& b) {
  auto trunk = std::make_unique<Sequential>();
  b.conv(*trunk, "conv1", {3, 32, 3, 2, 0, 1, false});
  trunk->emplace<BatchNorm2d>("bn1", 32);
  trunk->emplace<Activation>("relu1", ActivationKind::kReLU);
  b.conv(*trunk, "conv2", {32, 64, 3, 1, 0, 1, false});
  trunk->emplace<BatchNorm2d>("bn2", 64);
  trunk->emplace<Activation>("relu2", ActivationKind::kReLU);
  trunk->add("block1", xception_block(b, 64, 128, 2, 2, false, true));
  trunk->add("block2", xception_block(b, 128, 256, 2, 2, true, true));
  trunk->add("block3", xception_block(b, 256, 728, 2, 2, true, true));
  for (int i = 4; i <= 11; ++i) trunk->add("block" + std::to_string(i), xception_block(b, 728, 728, 3, 1, true, true));
  trunk->add("block12", xception_block(b, 728, 1024, 2, 2, true, false));
  separable(b, *trunk, "conv3", 1024, 1536);
  trunk->emplace<BatchNorm2d>("bn3", 1536);
  trunk->emplace<Activation>("relu3", ActivationKind::kReLU);
  separable(b, *trunk, "conv4", 1536, 2048);
  trunk->emplace<BatchNorm2d>("bn4", 2048);
  trunk->emplace<Activation>("relu4", ActivationKind::kReLU);
  trunk->emplace<GlobalAvgPool>("pool");
  auto head = std::make_unique<Sequential>();
  b.linear(*head, "last_linear", 2048, 2);
  return std::make_unique<Classifier>("xception", std::move(trunk), std::move(head), b.first_conv,
                                      b.last_linear);
}

// ----------------------------------------------------------------- tinycnn

std::unique_ptr<Classifier> build_tinycnn(Builder& b) {
  auto features = std::make_unique<Sequential>();
  b.conv(*features, "0", {3, 24, 5, 4, 2, 1, false});
  features->emplace<BatchNorm2d>("1", 24);
  features->emplace<Activation>("2", ActivationKind::kReLU);
  b.conv(*features, "3", conv_opt(24, 48, 3, 2));
  features->emplace<BatchNorm2d>("4", 48);
  features->emplace<Activation>("5", ActivationKind::kReLU);
  b.conv(*features, "6", conv_opt(48, 96, 3, 2));
  features->emplace<BatchNorm2d>("7", 96);
  features->emplace<Activation>("8", ActivationKind::kReLU);
  auto trunk = std::make_unique<Sequential>();
  trunk->add("features", std::move(features));
  // Max pooling keeps a small localized response from being averaged away.
  trunk->emplace<GlobalMaxPool>("pool");
  auto head = std::make_unique<Sequential>();
  b.linear(*head, "fc", 96, 2);
  return std::make_unique<Classifier>("tinycnn", std::move(trunk), std::move(head), b.first_conv,
                                      b.last_linear);
}

}  // namespace

const BackboneSpec& backbone_spec(const std::string& id) {
  for (const auto& s : registry()) {
    if (s.id == id) return s;
  }
  throw ConfigError("unknown backbone '" + id + "'");
}

std::vector<std::string> backbone_ids() {
  std::vector<std::string> ids;
  for (const auto& s : registry()) ids.push_back(s.id);
  return ids;
}

std::unique_ptr<Classifier> build_classifier(const std::string& id, std::uint64_t seed) {
  backbone_spec(id);
  Builder b{Rng(derive_seed(seed, "init")), derive_seed(seed, "dropout")};
  if (id == "resnet50") return build_resnet50(b);
  if (id == "mobilenetv2") return build_mobilenetv2(b);
  if (id == "efficientnet_b0") return build_efficientnet_b0(b);
  if (id == "xception") return build_xception(b);
  return build_tinycnn(b);
}

}  // namespace surfake::nn
