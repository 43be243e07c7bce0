#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/gsd.hpp"
#include "surfake/synthetic_scene.hpp"

namespace fs = std::filesystem;
using namespace surfake;
using namespace surfake::gsd;

namespace {

// Records the estimator-resolution input before delegating.
class Recording : public NormalEstimatorBackend {
 public:
  explicit Recording(NormalEstimatorBackend& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  FieldF estimate(const Image8& rgb) override {
    seen = rgb;
    return inner_.estimate(rgb);
  }
  Image8 seen;

 private:
  NormalEstimatorBackend& inner_;
};

class ConstantBackend : public NormalEstimatorBackend {
 public:
  ConstantBackend(int h, int w, float scale) : h_(h), w_(w), scale_(scale) {}
  std::string id() const override { return "constant"; }
  FieldF estimate(const Image8&) override {
    FieldF f(h_, w_, 3);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) f.at(y, x, 2) = scale_;
    return f;
  }

 private:
  int h_, w_;
  float scale_;
};

Image8 gray_crop(int side = 224) {
  Image8 img(side, side, 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>((x + 2 * y + 50 * c) % 256);
  return img;
}

}  // namespace

TEST(Codec, WorkedExamples) {
  EXPECT_EQ(encode_component(-1.0), 0);
  EXPECT_EQ(encode_component(1.0), 255);
  EXPECT_EQ(encode_component(0.0), 128);  // 127.5 rounds away from zero
  EXPECT_EQ(encode_component(0.5), 191);
  EXPECT_NEAR(decode_component(128), 0.00392156862745098, 1e-15);
  EXPECT_DOUBLE_EQ(decode_component(0), -1.0);
  EXPECT_DOUBLE_EQ(decode_component(255), 1.0);
}

TEST(Codec, ClampsWithinToleranceAndRejectsBeyond) {
  EXPECT_EQ(encode_component(1.0005), 255);
  EXPECT_EQ(encode_component(-1.0009), 0);
  EXPECT_THROW(encode_component(1.01), InvalidInputError);
  EXPECT_THROW(encode_component(std::nan("")), InvalidInputError);
}

TEST(Codec, ExhaustiveDecodeEncodeIdentity) {
  for (int p = 0; p < 256; ++p) EXPECT_EQ(encode_component(decode_component(static_cast<std::uint8_t>(p))), p);
}

TEST(Codec, RoundTripErrorBoundOnRandomUnitVectors) {
  Rng rng(12);
  GsdMap map{FieldF(100, 100, 3), "test"};
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x) {
      double v[3] = {rng.normal(), rng.normal(), rng.normal()};
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      for (int c = 0; c < 3; ++c) map.field.at(y, x, c) = static_cast<float>(v[c] / n);
    }
  const GsdMap back = decode_gsd(encode_gsd(map).image);
  for (std::size_t i = 0; i < map.field.values().size(); ++i) {
    ASSERT_LE(std::abs(back.field.values()[i] - map.field.values()[i]), 1.0 / 127.5 + 1e-6);
  }
}

TEST(Codec, DecodeRejectsWrongChannelCount) {
  EXPECT_THROW(decode_gsd(Image8(4, 4, 1)), InvalidInputError);
}

TEST(Estimate, FlatWallGivesConstantDescriptor) {
  synthetic::Scene scene;
  scene.head.reset();
  scene.camera_to_global = synthetic::camera_to_global(0.0, 0.0);
  synthetic::SceneBackend backend(scene);
  const GsdMap map = estimate_gsd(gray_crop(), backend);
  ASSERT_EQ(map.height(), 224);
  const Image8 enc = encode_gsd(map).image;
  for (int y = 0; y < 224; y += 7)
    for (int x = 0; x < 224; x += 7) {
      EXPECT_EQ(enc.at(y, x, 0), 128);
      EXPECT_EQ(enc.at(y, x, 1), 255);
      EXPECT_EQ(enc.at(y, x, 2), 128);
    }
}

TEST(Estimate, OutputIsUnitAfterResize) {
  ConstantBackend backend(kEstimatorHeight, kEstimatorWidth, 0.5f);
  const GsdMap map = estimate_gsd(gray_crop(), backend);
  for (int y = 0; y < 224; y += 13)
    for (int x = 0; x < 224; x += 13) EXPECT_FLOAT_EQ(map.field.at(y, x, 2), 1.0f);
}

TEST(Estimate, WrongShapeOrNonFiniteIsBackendError) {
  ConstantBackend small(10, 10, 1.0f);
  EXPECT_THROW(estimate_gsd(gray_crop(), small), BackendError);
  ConstantBackend nan_backend(kEstimatorHeight, kEstimatorWidth, std::nanf(""));
  EXPECT_THROW(estimate_gsd(gray_crop(), nan_backend), BackendError);
  EXPECT_THROW(estimate_gsd(Image8(), nan_backend), InvalidInputError);
}

TEST(Estimate, SceneBackendAgreesWithAnalyticOracle) {
  Rng rng(21);
  for (int i = 0; i < 3; ++i) {
    const synthetic::Scene scene = synthetic::random_face_scene(rng, false);
    synthetic::SceneBackend backend(scene);
    const GsdMap map = estimate_gsd(gray_crop(), backend);
    const auto cmp = test_support::compare_to_analytic(scene, map.field, 2);
    EXPECT_LT(cmp.max_angle_deg, 0.5) << "scene " << i;
    EXPECT_GT(cmp.compared, 224u * 224u * 8 / 10);
  }
}

TEST(Estimate, SyntheticBackendIsDeterministicPerSeedAndContent) {
  synthetic::SyntheticBackend a(5), b(5), c(6);
  const Image8 crop = gray_crop();
  const GsdMap ma = estimate_gsd(crop, a);
  EXPECT_EQ(ma.field, estimate_gsd(crop, b).field);
  EXPECT_NE(ma.field, estimate_gsd(crop, c).field);
  EXPECT_EQ(ma.backend_id, "synthetic:5");
}

TEST(Estimate, SyntheticBackendMatchesOracleOfItsScene) {
  synthetic::SyntheticBackend inner(9);
  Recording rec(inner);
  const GsdMap map = estimate_gsd(gray_crop(), rec);
  Rng rng(9 ^ sha256_u64(rec.seen.pixels()));
  const synthetic::Scene scene = synthetic::random_face_scene(rng, false);
  EXPECT_LT(test_support::compare_to_analytic(scene, map.field, 2).max_angle_deg, 0.5);
}

TEST(Estimate, MakeBackendParsesSpecs) {
  EXPECT_EQ(make_backend("synthetic:17")->id(), "synthetic:17");
  EXPECT_THROW(make_backend("synthetic:x"), ConfigError);
  EXPECT_THROW(make_backend("nonsense"), ConfigError);
  EXPECT_THROW(make_backend("pretrained:/nonexistent/model.onnx"), MissingArtifactError);
}

TEST(LogVisualize, MatchesDirectFormula) {
  const float ch0[4] = {-1.0f, 0.0f, 1.0f, 0.5f};
  GsdMap map{FieldF(2, 2, 3), "test"};
  for (int i = 0; i < 4; ++i) {
    map.field.at(i / 2, i % 2, 0) = ch0[i];
    map.field.at(i / 2, i % 2, 1) = std::sqrt(1.0f - ch0[i] * ch0[i]);
  }
  const LogVisualization vis = log_visualize(map);
  // Encoded channel 0: 0, 128, 255, 191.
  const double logs[4] = {std::log(1e-3), std::log(128 / 255.0 + 1e-3), std::log(1.0 + 1e-3),
                          std::log(191 / 255.0 + 1e-3)};
  for (int i = 0; i < 4; ++i) {
    const double g = (logs[i] - logs[0]) / (logs[2] - logs[0]) * 255.0;
    EXPECT_EQ(vis.gray.at(i / 2, i % 2, 0), static_cast<int>(std::lround(g)));
  }
  const std::uint8_t frozen[4] = {0, 230, 255, 244};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(vis.gray.pixels()[i], frozen[i]);
  EXPECT_EQ(vis.color.channels(), 3);
}

TEST(LogVisualize, ConstantMapIsMidGray) {
  GsdMap map{FieldF(3, 3, 3), "test"};
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) map.field.at(y, x, 2) = 1.0f;
  const LogVisualization vis = log_visualize(map);
  for (auto p : vis.gray.pixels()) EXPECT_EQ(p, 128);
  EXPECT_THROW(log_visualize(map, 0.0), InvalidInputError);
}

TEST(RawSidecar, RoundTripAndErrors) {
  GsdMap map{FieldF(3, 4, 3), "x"};
  for (std::size_t i = 0; i < map.field.values().size(); ++i) map.field.values()[i] = 0.1f * static_cast<float>(i) - 0.5f;
  const fs::path p = fs::temp_directory_path() / "surfake_gsd_sidecar.raw";
  write_raw_sidecar(p, map);
  EXPECT_EQ(fs::file_size(p), 4u + 8u + 3u * 4u * 3u * 4u);
  EXPECT_EQ(read_raw_sidecar(p).field, map.field);
  fs::resize_file(p, 20);
  EXPECT_THROW(read_raw_sidecar(p), InvalidInputError);
  fs::remove(p);
  EXPECT_THROW(read_raw_sidecar(p), MissingArtifactError);
}
