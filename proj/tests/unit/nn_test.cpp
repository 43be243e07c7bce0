#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>

#include "surfake/common/error.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/nn/layers.hpp"
#include "surfake/nn/model.hpp"
#include "surfake/nn/serialize.hpp"
#include "video_fixtures.hpp"

namespace fs = std::filesystem;
using namespace surfake;
using namespace surfake::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(scale * rng.normal());
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
  return s;
}

// Central differences of L = sum(forward(x) * r) against backward(), for a
// sample of input coordinates and of every trainable parameter.
void check_gradients(Layer& layer, Tensor x, Mode mode, double tol = 2e-2, double eps = 1e-2) {
  Rng rng(99);
  Tensor y = layer.forward(x, mode);
  const Tensor r = random_tensor(y.shape(), rng);
  layer.visit("", [](const std::string&, Parameter& p) {
    if (p.trainable) p.grad.fill(0.f);
  });
  const Tensor gx = layer.backward(r);
  ASSERT_EQ(gx.shape(), x.shape());
  auto loss = [&]() { return weighted_sum(layer.forward(x, mode), r); };
  for (int k = 0; k < 12; ++k) {
    const std::size_t i = rng.uniform_below(x.size());
    const float saved = x[i];
    x[i] = saved + static_cast<float>(eps);
    const double up = loss();
    x[i] = saved - static_cast<float>(eps);
    const double down = loss();
    x[i] = saved;
    const double fd = (up - down) / (2 * eps);
    EXPECT_NEAR(gx[i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << i;
  }
  layer.visit("", [&](const std::string& name, Parameter& p) {
    if (!p.trainable) return;
    for (int k = 0; k < 6; ++k) {
      const std::size_t i = rng.uniform_below(p.value.size());
      const float saved = p.value[i];
      p.value[i] = saved + static_cast<float>(eps);
      const double up = loss();
      p.value[i] = saved - static_cast<float>(eps);
      const double down = loss();
      p.value[i] = saved;
      const double fd = (up - down) / (2 * eps);
      EXPECT_NEAR(p.grad[i], fd, tol * std::max(1.0, std::abs(fd))) << name << "[" << i << "]";
    }
  });
}

}  // namespace

TEST(Gradients, Conv2d) {
  Rng rng(1);
  Conv2d dense({3, 4, 3, 2, 1, 1, true}, rng);
  check_gradients(dense, random_tensor({2, 3, 9, 8}, rng), Mode::kTrain);
  Conv2d depthwise({4, 4, 3, 1, 1, 4, false}, rng);
  check_gradients(depthwise, random_tensor({2, 4, 7, 7}, rng), Mode::kTrain);
}

TEST(Gradients, BatchNormTrainAndEval) {
  Rng rng(2);
  BatchNorm2d bn(3);
  check_gradients(bn, random_tensor({4, 3, 5, 5}, rng), Mode::kTrain, 3e-2);
  check_gradients(bn, random_tensor({2, 3, 5, 5}, rng), Mode::kEval);
}

TEST(Gradients, Activations) {
  Rng rng(3);
  for (auto kind : {ActivationKind::kReLU, ActivationKind::kReLU6, ActivationKind::kSiLU, ActivationKind::kSigmoid}) {
    Activation act(kind);
    check_gradients(act, random_tensor({2, 3, 4, 4}, rng, 3.0), Mode::kTrain);
  }
}

TEST(Gradients, Pools) {
  Rng rng(4);
  MaxPool2d mp(3, 2, 1);
  check_gradients(mp, random_tensor({2, 2, 9, 9}, rng), Mode::kTrain);
  GlobalAvgPool gap;
  check_gradients(gap, random_tensor({2, 3, 5, 4}, rng), Mode::kTrain);
  GlobalMaxPool gmp;
  check_gradients(gmp, random_tensor({2, 3, 5, 4}, rng), Mode::kTrain);
}

TEST(Gradients, LinearSequentialResidualSqueezeExcite) {
  Rng rng(5);
  Linear fc(7, 3, rng);
  check_gradients(fc, random_tensor({4, 7}, rng), Mode::kTrain);

  auto body = std::make_unique<Sequential>();
  body->emplace<Conv2d>("0", ConvOptions{4, 4, 3, 1, 1, 1, false}, rng);
  body->emplace<BatchNorm2d>("1", 4);
  // Smooth post-activation: a bias nudge would push elements across a ReLU kink.
  Residual res("conv", std::move(body), {}, nullptr, ActivationKind::kSiLU);
  check_gradients(res, random_tensor({3, 4, 6, 6}, rng), Mode::kTrain, 3e-2);

  SqueezeExcite se(6, 2, rng);
  check_gradients(se, random_tensor({2, 6, 4, 4}, rng), Mode::kTrain);
}

TEST(Layers, DropoutScalesInTrainAndIsIdentityInEval) {
  Rng rng(6);
  Dropout drop(0.5f, 17);
  const Tensor x = random_tensor({8, 100}, rng);
  EXPECT_EQ(drop.forward(x, Mode::kEval), x);
  const Tensor y = drop.forward(x, Mode::kTrain);
  int zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.f) {
      ++zeros;
    } else {
      EXPECT_FLOAT_EQ(y[i], 2.f * x[i]);
    }
  }
  EXPECT_NEAR(zeros / 800.0, 0.5, 0.08);
  const Tensor g = drop.backward(Tensor({8, 100}, 1.f));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(g[i], y[i] == 0.f ? 0.f : 2.f);
}

TEST(Layers, BatchNormRunningStatsUseUnbiasedVariance) {
  BatchNorm2d bn(1);
  Tensor x({1, 1, 1, 4});
  for (int i = 0; i < 4; ++i) x[i] = static_cast<float>(i);  // mean 1.5, unbiased var 5/3
  bn.forward(x, Mode::kTrain);
  StateDict s;
  bn.visit("bn.", [&](const std::string& n, Parameter& p) { s[n] = p.value; });
  EXPECT_NEAR(s["bn.running_mean"][0], 0.15, 1e-6);
  EXPECT_NEAR(s["bn.running_var"][0], 0.9 + 0.1 * 5.0 / 3.0, 1e-6);
}

TEST(Backbones, ParameterCountsMatchReferenceArchitectures) {
  // ImageNet totals with the 1000-way head swapped for a 2-way one.
  const std::pair<const char*, std::size_t> expect[] = {
      {"resnet50", 25557032 - 2049000 + 4098},
      {"mobilenetv2", 3504872 - 1281000 + 2562},
      {"efficientnet_b0", 5288548 - 1281000 + 2562},
      {"xception", 22855952 - 2049000 + 4098},
  };
  for (const auto& [id, count] : expect) EXPECT_EQ(build_classifier(id, 0)->parameter_count(), count) << id;
  const std::size_t tiny = build_classifier("tinycnn", 0)->parameter_count();
  EXPECT_GT(tiny, 40000u);
  EXPECT_LT(tiny, 70000u);
}

TEST(Backbones, RegistryAndNames) {
  EXPECT_EQ(backbone_ids().size(), 5u);
  EXPECT_EQ(backbone_spec("xception").input_side, 299);
  EXPECT_EQ(backbone_spec("xception").mean[0], 0.5f);
  EXPECT_EQ(backbone_spec("resnet50").mean[0], 0.485f);
  EXPECT_FALSE(backbone_spec("tinycnn").paper_backbone);
  EXPECT_THROW(backbone_spec("vgg16"), ConfigError);
  const StateDict s = build_classifier("resnet50", 0)->state();
  for (const char* name : {"conv1.weight", "bn1.running_var", "layer1.0.downsample.0.weight",
                           "layer4.2.conv3.weight", "fc.weight", "fc.bias"})
    EXPECT_TRUE(s.count(name)) << name;
  const StateDict x = build_classifier("xception", 0)->state();
  for (const char* name : {"block1.skip.weight", "block1.rep.0.conv1.weight", "block12.rep.4.pointwise.weight",
                           "conv4.pointwise.weight", "last_linear.weight"})
    EXPECT_TRUE(x.count(name)) << name;
}

TEST(Backbones, TinyForwardShapesAndFeatures) {
  auto model = build_classifier("tinycnn", 3);
  Rng rng(7);
  const Tensor x = random_tensor({2, 3, 224, 224}, rng);
  EXPECT_EQ(model->forward(x, Mode::kEval).shape(), (std::vector<int>{2, 2}));
  EXPECT_EQ(model->features(x).shape(), (std::vector<int>{2, 96}));
  EXPECT_THROW(model->forward(random_tensor({2, 6, 224, 224}, rng), Mode::kEval), InvalidInputError);
}

TEST(Backbones, MobilenetFeatureWidth) {
  auto model = build_classifier("mobilenetv2", 3);
  Rng rng(8);
  EXPECT_EQ(model->features(random_tensor({1, 3, 224, 224}, rng)).shape(), (std::vector<int>{1, 1280}));
}

TEST(Backbones, SameSeedSameWeights) {
  EXPECT_EQ(build_classifier("tinycnn", 5)->state(), build_classifier("tinycnn", 5)->state());
  EXPECT_NE(build_classifier("tinycnn", 5)->state(), build_classifier("tinycnn", 6)->state());
}

TEST(State, StrictAndPartialLoading) {
  auto a = build_classifier("tinycnn", 1);
  auto b = build_classifier("tinycnn", 2);
  StateDict s = a->state();
  EXPECT_TRUE(b->load_state(s, true).missing.empty());
  EXPECT_EQ(b->state(), s);
  s.erase("fc.bias");
  s["extra"] = Tensor({1});
  EXPECT_THROW(b->load_state(s, true), InvalidInputError);
  const LoadReport r = b->load_state(s, false);
  EXPECT_EQ(r.missing, std::vector<std::string>{"fc.bias"});
  EXPECT_EQ(r.unexpected, std::vector<std::string>{"extra"});
}

TEST(Serialize, RoundTripAndCorruption) {
  const fs::path dir = test_support::fresh_temp_dir("serialize");
  const StateDict s = build_classifier("tinycnn", 9)->state();
  save_tensors(dir / "t.sftb", s);
  EXPECT_EQ(load_tensors(dir / "t.sftb"), s);
  fs::resize_file(dir / "t.sftb", 100);
  EXPECT_THROW(load_tensors(dir / "t.sftb"), InvalidInputError);
  EXPECT_THROW(load_tensors(dir / "none.sftb"), MissingArtifactError);
}

// Forward parity with torchvision on random weights. Needs python3 with torch
// and torchvision; skipped otherwise.
class TorchParity : public ::testing::TestWithParam<const char*> {};

TEST_P(TorchParity, LogitsMatch) {
  const std::string arch = GetParam();
  const fs::path dir = test_support::fresh_temp_dir("parity_" + arch);
  const std::string cmd = "python3 " SURFAKE_TOOLS "/export_torchvision_weights.py --parity --arch " + arch +
                          " --out " + dir.string() + " > /dev/null 2>&1";
  if (std::system("python3 -c 'import torch, torchvision' > /dev/null 2>&1") != 0) {
    GTEST_SKIP() << "torch/torchvision not available";
  }
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  auto model = build_classifier(arch, 0);
  model->load_state(load_tensors(dir / (arch + "_weights.sftb")), true);
  const StateDict io = load_tensors(dir / (arch + "_io.sftb"));
  const Tensor y = model->forward(io.at("input"), Mode::kEval);
  const Tensor& expect = io.at("logits");
  ASSERT_EQ(y.shape(), expect.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expect[i], 1e-3 * std::max(1.f, std::abs(expect[i])));
  fs::remove_all(dir);
}

INSTANTIATE_TEST_SUITE_P(Torchvision, TorchParity, ::testing::Values("resnet50", "mobilenetv2", "efficientnet_b0"));

TEST(Layers, NanPropagatesThroughRectifiersAndPools) {
  Tensor x({1, 1, 4, 4}, -1.f);
  x[5] = std::nanf("");
  for (auto kind : {ActivationKind::kReLU, ActivationKind::kReLU6}) {
    Activation act(kind);
    EXPECT_TRUE(std::isnan(act.forward(x, Mode::kTrain)[5]));
  }
  MaxPool2d mp(2, 2, 0);
  EXPECT_TRUE(std::isnan(mp.forward(x, Mode::kTrain)[0]));
  GlobalMaxPool gmp;
  EXPECT_TRUE(std::isnan(gmp.forward(x, Mode::kTrain)[0]));
}
