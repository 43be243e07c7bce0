#include <gtest/gtest.h>

#include "oracles.hpp"
#include "surfake/common/error.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/fusion.hpp"
#include "surfake/kernels/conv2d.hpp"
#include "surfake/nn/model.hpp"

using namespace surfake;
using namespace surfake::fusion;

namespace {

Image8 noise_image(int side, std::uint64_t seed) {
  Rng rng(seed);
  Image8 img(side, side, 3);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.uniform_below(256));
  return img;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

}  // namespace

TEST(Normalize, WorkedExamples) {
  Image8 img(224, 224, 3, 0);
  img.at(0, 0, 0) = 255;
  const Tensor t = normalize_branch(img, NormalizationSpec::for_backbone("resnet50"));
  EXPECT_NEAR(t[0], (1.0 - 0.485) / 0.229, 1e-6);
  EXPECT_NEAR(t[0], 2.2489082969432315, 1e-6);

  Image8 mid(299, 299, 3, 128);
  const Tensor x = normalize_branch(mid, NormalizationSpec::for_backbone("xception"));
  EXPECT_NEAR(x[0], 0.00392156862745098, 1e-7);

  NormalizationSpec identity;
  const Image8 noise = noise_image(224, 1);
  const Tensor id = normalize_branch(noise, identity);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 224 * 224; ++i) ASSERT_EQ(id[c * 224 * 224 + i], noise.pixels()[i * 3 + c] / 255.f);
}

TEST(Normalize, RejectsShapeMismatchAndBadSpec) {
  EXPECT_THROW(normalize_branch(Image8(100, 100, 3), NormalizationSpec{}), InvalidInputError);
  NormalizationSpec bad;
  bad.std[1] = 0.f;
  EXPECT_THROW(normalize_branch(Image8(224, 224, 3), bad), ConfigError);
}

TEST(Normalize, JsonOverridesAndRejectsUnknownKeys) {
  const auto base = NormalizationSpec::for_backbone("mobilenetv2");
  const auto s = normalization_from_json(Json{{"mean", {0.5, 0.5, 0.5}}}, base);
  EXPECT_EQ(s.mean[1], 0.5f);
  EXPECT_EQ(s.std, base.std);
  EXPECT_THROW(normalization_from_json(Json{{"scale", 2}}, base), ConfigError);
  const auto rt = normalization_from_json(to_json(s), NormalizationSpec{});
  EXPECT_EQ(rt.mean, s.mean);
  EXPECT_EQ(rt.std, s.std);
  EXPECT_EQ(rt.input_side, s.input_side);
}

TEST(Fuse, ShapeZeroBranchAndRoundTrip) {
  Rng rng(2);
  const Tensor a = random_tensor({3, 224, 224}, rng), b = random_tensor({3, 224, 224}, rng);
  const Tensor f = fuse(a, b);
  EXPECT_EQ(f.shape(), (std::vector<int>{6, 224, 224}));
  const auto [ra, rb] = split_fused(f);
  EXPECT_EQ(ra, a);
  EXPECT_EQ(rb, b);
  const Tensor z = fuse(a, Tensor({3, 224, 224}));
  for (std::size_t i = a.size(); i < z.size(); ++i) ASSERT_EQ(z[i], 0.f);
  EXPECT_THROW(fuse(a, Tensor({3, 10, 10})), InvalidInputError);
  EXPECT_THROW(split_fused(a), InvalidInputError);
}

TEST(Adapt, MeanOfTapsAndZeroWeights) {
  Tensor w({1, 3, 1, 1});
  w[0] = 1.f;
  w[1] = 2.f;
  w[2] = 3.f;
  const Tensor a = adapt_first_layer(w);
  EXPECT_EQ(a.shape(), (std::vector<int>{1, 6, 1, 1}));
  for (int c = 3; c < 6; ++c) EXPECT_EQ(a[c], 2.f);
  const Tensor z = adapt_first_layer(Tensor({4, 3, 3, 3}));
  for (float v : z.values()) EXPECT_EQ(v, 0.f);
  EXPECT_THROW(adapt_first_layer(Tensor({4, 6, 3, 3})), InvalidInputError);
}

TEST(Adapt, ZeroGsdEquivalenceAgainstDirectConvolution) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int o = 1 + static_cast<int>(rng.uniform_below(6)), k = 1 + 2 * static_cast<int>(rng.uniform_below(3));
    const int side = 5 + static_cast<int>(rng.uniform_below(8));
    const Tensor w = random_tensor({o, 3, k, k}, rng);
    const Tensor x = random_tensor({2, 3, side, side}, rng);
    std::vector<float> bias(o);
    for (auto& b : bias) b = static_cast<float>(rng.normal());
    const Tensor adapted = adapt_first_layer(w);
    for (int c = 0; c < o; ++c)
      for (int i = 0; i < 3 * k * k; ++i) ASSERT_EQ(adapted[c * 6 * k * k + i], w[c * 3 * k * k + i]);
    Tensor x6({2, 6, side, side});
    for (int n = 0; n < 2; ++n)
      std::copy_n(x.data() + n * 3 * side * side, 3 * side * side, x6.data() + n * 6 * side * side);
    const Tensor y3 = test_support::naive_conv2d(x, w, bias, 1, k / 2);
    const Tensor y6 = test_support::naive_conv2d(x6, adapted, bias, 1, k / 2);
    ASSERT_EQ(y3.shape(), y6.shape());
    for (std::size_t i = 0; i < y3.size(); ++i) ASSERT_NEAR(y3[i], y6[i], 1e-6);
    // Same check through the production kernel.
    kernels::ConvGeometry g3{2, 3, side, side, o, k, k, 1, k / 2, 1}, g6 = g3;
    g6.in_channels = 6;
    std::vector<float> p3(g3.output_size()), p6(g6.output_size());
    kernels::conv2d_forward(g3, x.values(), w.values(), bias, p3);
    kernels::conv2d_forward(g6, x6.values(), adapted.values(), bias, p6);
    for (std::size_t i = 0; i < p3.size(); ++i) ASSERT_NEAR(p3[i], p6[i], 1e-6);
  }
}

TEST(Adapt, ClassifierAdaptsOnceAndKeepsRgbPathway) {
  auto model = nn::build_classifier("tinycnn", 4);
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 64, 64}, rng);
  const Tensor before = model->forward(x, nn::Mode::kEval);
  adapt_classifier(*model);
  EXPECT_EQ(model->in_channels(), 6);
  Tensor x6({2, 6, 64, 64});
  for (int n = 0; n < 2; ++n) std::copy_n(x.data() + n * 3 * 64 * 64, 3 * 64 * 64, x6.data() + n * 6 * 64 * 64);
  const Tensor after = model->forward(x6, nn::Mode::kEval);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-5);
  EXPECT_THROW(adapt_classifier(*model), InvalidInputError);
}

TEST(ResizeForArch, UpscalesForXceptionOnly) {
  Rng rng(6);
  FusedSample s{random_tensor({6, 224, 224}, rng), ingestion::Label::kFake, {"v", 3, ingestion::Forgery::kDF}};
  const FusedSample x = resize_for_arch(s, "xception");
  EXPECT_EQ(x.tensor.shape(), (std::vector<int>{6, 299, 299}));
  EXPECT_EQ(x.provenance.video_id, "v");
  EXPECT_EQ(resize_for_arch(s, "resnet50").tensor, s.tensor);
  FusedSample c{Tensor({6, 224, 224}, 0.25f), ingestion::Label::kReal, {}};
  const FusedSample up = resize_for_arch(c, "xception");
  for (float v : up.tensor.values()) ASSERT_FLOAT_EQ(v, 0.25f);
  EXPECT_THROW(resize_for_arch(s, "vgg16"), ConfigError);
}

TEST(BuildInput, ResizesInEightBitBeforeNormalizing) {
  const Image8 rgb = noise_image(224, 7), gsd = noise_image(224, 8);
  BranchNormalization norm{NormalizationSpec::for_backbone("xception"), NormalizationSpec::for_backbone("xception")};
  const Tensor t = build_input(rgb, gsd, InputMode::kRgbGsd, norm);
  EXPECT_EQ(t.shape(), (std::vector<int>{6, 299, 299}));
  const Tensor expect = fuse(normalize_branch(resize_image(rgb, 299), norm.rgb),
                             normalize_branch(resize_image(gsd, 299), norm.gsd));
  EXPECT_EQ(t, expect);
  // The other order rounds differently, so the fixed order is observable.
  FusedSample late{fuse(normalize_branch(rgb, NormalizationSpec{{0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f}, 224}),
                        normalize_branch(gsd, NormalizationSpec{{0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f}, 224})),
                   ingestion::Label::kReal,
                   {}};
  EXPECT_NE(resize_for_arch(late, "xception").tensor, t);
  EXPECT_EQ(build_input(rgb, Image8(), InputMode::kRgb, norm).dim(0), 3);
  EXPECT_THROW(build_input(rgb, Image8(), InputMode::kGsd, norm), InvalidInputError);
}

TEST(InputModes, ParseAndChannels) {
  EXPECT_EQ(parse_input_mode("rgb_gsd"), InputMode::kRgbGsd);
  EXPECT_EQ(input_channels(InputMode::kGsd), 3);
  EXPECT_EQ(input_channels(InputMode::kRgbGsd), 6);
  EXPECT_THROW(parse_input_mode("depth"), ConfigError);
}
