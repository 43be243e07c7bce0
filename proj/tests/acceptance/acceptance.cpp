// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <Eigen/Dense>
#include <bit>
#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "desk_scale.hpp"
#include "oracles.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/evaluation.hpp"
#include "surfake/facecrop.hpp"
#include "surfake/fusion.hpp"
#include "surfake/gsd.hpp"
#include "surfake/ingestion.hpp"
#include "surfake/kernels/conv2d.hpp"
#include "surfake/synthetic_scene.hpp"
#include "surfake/training.hpp"
#include "video_fixtures.hpp"

namespace fs = std::filesystem;
using namespace surfake;
using ingestion::Label;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome codec_exactness() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const int n = 1000000;
  FieldF field(1000, 1000, 3);
  for (int i = 0; i < n; ++i) {
    double v[3];
    double norm = 0;
    do {
      norm = 0;
      for (double& c : v) c = rng.normal(), norm += c * c;
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (int c = 0; c < 3; ++c) field.at(i / 1000, i % 1000, c) = static_cast<float>(v[c] / norm);
  }
  const gsd::GsdMap back = gsd::decode_gsd(gsd::encode_gsd(gsd::GsdMap{field, "acceptance"}).image);
  double worst = 0;
  for (std::size_t i = 0; i < field.values().size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(back.field.values()[i]) - field.values()[i]));
  bool monotone = true;
  int prev = -1;
  for (int k = 0; k <= 200000; ++k) {
    const int p = gsd::encode_component(-1.0 + 2.0 * k / 200000);
    monotone &= p >= prev;
    prev = p;
  }
  bool identity = true;
  for (int p = 0; p < 256; ++p) identity &= gsd::encode_component(gsd::decode_component(static_cast<std::uint8_t>(p))) == p;
  const double secs = seconds_since(t0);
  const bool pass = worst <= 1.0 / 127.5 && monotone && identity && secs < 30;
  return {pass, fmt("max error %.6f (bound 0.007843)", worst) + (monotone ? ", monotone" : ", NOT monotone") +
                    (identity ? ", 256/256 identity" : ", identity broken") + fmt(", %.1f s", secs)};
}

Outcome adaptation_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(202);
  double worst = 0;         // adapted 6-channel conv vs pretrained 3-channel conv
  double oracle_rel = 0;    // 3-channel conv vs double-precision direct convolution
  bool bit_equal = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int o = 1 + static_cast<int>(rng.uniform_below(8));
    const int k = 1 + 2 * static_cast<int>(rng.uniform_below(3));
    const int side = 4 + static_cast<int>(rng.uniform_below(12));
    const int stride = 1 + static_cast<int>(rng.uniform_below(2));
    Tensor w({o, 3, k, k}), x({1, 3, side, side});
    for (auto& v : w.values()) v = static_cast<float>(rng.normal());
    for (auto& v : x.values()) v = static_cast<float>(rng.normal());
    std::vector<float> bias(o);
    for (auto& b : bias) b = static_cast<float>(rng.normal());
    const Tensor adapted = fusion::adapt_first_layer(w);
    for (int c = 0; c < o; ++c)
      for (int i = 0; i < 3 * k * k; ++i)
        bit_equal &= std::bit_cast<std::uint32_t>(adapted[c * 6 * k * k + i]) ==
                     std::bit_cast<std::uint32_t>(w[c * 3 * k * k + i]);
    const Tensor x6 = fusion::fuse(x.reshaped({3, side, side}), Tensor({3, side, side})).reshaped({1, 6, side, side});
    kernels::ConvGeometry g3{1, 3, side, side, o, k, k, stride, k / 2, 1}, g6 = g3;
    g6.in_channels = 6;
    std::vector<float> y3(g3.output_size()), y6(g6.output_size());
    kernels::conv2d_forward(g3, x.values(), w.values(), bias, y3);
    kernels::conv2d_forward(g6, x6.values(), adapted.values(), bias, y6);
    const Tensor ref = test_support::naive_conv2d(x, w, bias, stride, k / 2);
    double ref_max = 1.0, ref_err = 0.0;
    for (std::size_t i = 0; i < y3.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(y3[i] - y6[i])));
      ref_max = std::max(ref_max, static_cast<double>(std::abs(ref[i])));
      ref_err = std::max(ref_err, static_cast<double>(std::abs(ref[i] - y3[i])));
    }
    oracle_rel = std::max(oracle_rel, ref_err / ref_max);
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && bit_equal && oracle_rel <= 1e-5 && secs < 10,
          fmt("max |diff| %.3g (bound 1e-6)", worst) + (bit_equal ? ", RGB taps bit-equal" : ", RGB taps differ") +
              fmt(", direct-conv oracle rel. error %.2g", oracle_rel) + fmt(", %.2f s", secs)};
}

Outcome auc_oracle() {
  Rng rng(303);
  double worst = 0;
  int sets = 0;
  for (; sets < 1000; ++sets) {
    const std::size_t n = 2 + rng.uniform_below(200);
    const std::uint64_t levels = sets % 2 == 0 ? 1 + rng.uniform_below(4) : 1000000;
    std::vector<double> s(n);
    std::vector<Label> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_below(levels)) / levels;
      l[i] = rng.uniform() < 0.5 ? Label::kFake : Label::kReal;
    }
    l[0] = Label::kFake;
    l[1] = Label::kReal;
    worst = std::max(worst, std::abs(evaluation::roc_and_auc(s, l).auc - test_support::mann_whitney_auc(s, l)));
  }
  const double example = evaluation::roc_and_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8},
                                                 std::vector<Label>{Label::kReal, Label::kReal, Label::kFake, Label::kFake})
                             .auc;
  return {worst <= 1e-9 && example == 0.75,
          std::to_string(sets) + fmt(" sets, max |trapezoid - pair count| %.3g", worst) +
              fmt(", worked example %.17g", example)};
}

Outcome split_integrity() {
  ingestion::DatasetManifest m;
  for (int i = 0; i < 1000; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "%04d", i);
    m.records.push_back({id, std::string(id) + ".mp4", Label::kReal, ingestion::Forgery::kNone, id});
  }
  Rng rng(404);
  for (ingestion::Forgery f : ingestion::kManipulations) {
    for (int i = 0; i < 1000; ++i) {
      const std::string src = m.records[i].video_id;
      const std::string other = m.records[(i + 1 + rng.uniform_below(999)) % 1000].video_id;
      const std::string id = std::string(ingestion::to_string(f)) + "_" + src + "_" + other;
      m.records.push_back({id, id + ".mp4", Label::kFake, f, src});
    }
  }
  const auto s = ingestion::make_splits(m, 2024);
  std::array<int, 3> counts{};
  for (const auto& r : m.records)
    if (r.label == Label::kReal) ++counts[static_cast<int>(*s.find(r.video_id))];
  std::size_t pairs = 0, violations = 0;
  for (const auto& fake : m.records) {
    if (fake.label != Label::kFake) continue;
    for (const auto& real : m.records) {
      if (real.label != Label::kReal || real.video_id != fake.source_video_id) continue;
      ++pairs;
      violations += s.find(fake.video_id) != s.find(real.video_id);
    }
  }
  bool stable = true;
  for (int rerun = 0; rerun < 5; ++rerun) stable &= ingestion::make_splits(m, 2024).assignment == s.assignment;
  const bool pass = counts == std::array<int, 3>{720, 140, 140} && pairs == 5000 && violations == 0 && stable;
  return {pass, std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" + std::to_string(counts[2]) + ", " +
                    std::to_string(violations) + " leaks in " + std::to_string(pairs) + " fake-source pairs" +
                    (stable ? ", 5 reruns identical" : ", reruns differ")};
}

// Keeps the estimator-resolution input so the seeded scene can be rebuilt.
class Recording : public gsd::NormalEstimatorBackend {
 public:
  explicit Recording(gsd::NormalEstimatorBackend& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  FieldF estimate(const Image8& rgb) override {
    seen = rgb;
    return inner_.estimate(rgb);
  }
  Image8 seen;

 private:
  gsd::NormalEstimatorBackend& inner_;
};

Outcome gsd_fidelity() {
  double worst = 0;
  std::size_t compared = 0, total = 0;
  bool deterministic = true;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng rng(seed);
    const synthetic::Scene scene = synthetic::random_face_scene(rng, false);
    const Image8 crop = synthetic::render_shading(scene, 224, 224);
    synthetic::SceneBackend backend(scene);
    const gsd::GsdMap map = gsd::estimate_gsd(crop, backend);
    const auto cmp = test_support::compare_to_analytic(scene, map.field, 2);
    worst = std::max(worst, cmp.max_angle_deg);
    compared += cmp.compared;
    total += 224 * 224;

    // Seeded backend: same seed and crop reproduce the field, and the field
    // is that of the scene the seed selects.
    synthetic::SyntheticBackend a(seed), b(seed);
    Recording rec(a);
    const gsd::GsdMap ma = gsd::estimate_gsd(crop, rec);
    deterministic &= ma.field == gsd::estimate_gsd(crop, b).field;
    Rng scene_rng(seed ^ sha256_u64(rec.seen.pixels()));
    const auto chosen = synthetic::random_face_scene(scene_rng, false);
    worst = std::max(worst, test_support::compare_to_analytic(chosen, ma.field, 2).max_angle_deg);
  }
  return {worst < 0.5 && deterministic,
          fmt("max angular error %.4f deg", worst) + fmt(" over %.1f%% of pixels", 100.0 * compared / total) +
              (deterministic ? ", deterministic per seed" : ", NOT deterministic")};
}

// Dual-form ridge regression on the flattened network inputs: fits the
// training portion and reports training and held-out accuracy.
struct LinearOracle {
  double train_accuracy = 0;
  double test_accuracy = 0;
};

LinearOracle linear_oracle(const std::vector<fusion::FusedSample>& train, const std::vector<fusion::FusedSample>& test) {
  const Eigen::Index n = static_cast<Eigen::Index>(train.size());
  const Eigen::Index d = static_cast<Eigen::Index>(train.front().tensor.size());
  Eigen::MatrixXf x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = Eigen::Map<const Eigen::RowVectorXf>(train[i].tensor.data(), d);
    y(i) = train[i].label == Label::kFake ? 1.0 : -1.0;
  }
  const Eigen::RowVectorXf mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd gram = (x * x.transpose()).cast<double>();
  const double ridge = 1e-6 * gram.trace() / n;
  gram.diagonal().array() += ridge;
  const double bias = y.mean();
  const Eigen::VectorXd alpha = gram.ldlt().solve((y.array() - bias).matrix());
  const Eigen::VectorXf w = (x.transpose() * alpha.cast<float>());
  auto score = [&](const Tensor& t) {
    const Eigen::Map<const Eigen::RowVectorXf> row(t.data(), d);
    return static_cast<double>((row - mean).dot(w)) + bias;
  };
  LinearOracle out;
  for (const auto& s : train) out.train_accuracy += (score(s.tensor) > 0) == (s.label == Label::kFake);
  for (const auto& s : test) out.test_accuracy += (score(s.tensor) > 0) == (s.label == Label::kFake);
  out.train_accuracy /= static_cast<double>(train.size());
  out.test_accuracy /= static_cast<double>(test.size());
  return out;
}

struct DeskRun {
  training::Checkpoint checkpoint;
  std::vector<fusion::FusedSample> test;
  double seconds = 0;
  LinearOracle oracle;
};

DeskRun& desk_run() {
  static DeskRun run = [] {
    const auto t0 = Clock::now();
    DeskRun r;
    const auto data = test_support::make_desk_dataset(200, 2718);
    const auto split = ingestion::make_splits(data.manifest, 2718);
    training::TrainConfig cfg;
    cfg.backbone = "tinycnn";
    cfg.input_mode = fusion::InputMode::kGsd;
    cfg.epochs = 30;
    cfg.seed = 2718;
    const auto norm = cfg.normalization();
    const auto train = test_support::desk_portion(data, split, ingestion::Split::kTrain, cfg.input_mode, norm);
    const auto val = test_support::desk_portion(data, split, ingestion::Split::kVal, cfg.input_mode, norm);
    r.test = test_support::desk_portion(data, split, ingestion::Split::kTest, cfg.input_mode, norm);
    r.oracle = linear_oracle(train, r.test);
    std::printf("  desk data: %zu train, %zu val, %zu test samples; linear oracle train %.3f, held-out %.3f\n",
                train.size(), val.size(), r.test.size(), r.oracle.train_accuracy, r.oracle.test_accuracy);
    r.checkpoint = training::train(cfg, training::InMemorySource(train), training::InMemorySource(val),
                                   [](int epoch, double tl, double vl) {
                                     std::printf("  epoch %2d  train loss %.4f  val loss %.4f\n", epoch, tl, vl);
                                     std::fflush(stdout);
                                   });
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome desk_end_to_end() {
  DeskRun& run = desk_run();
  const auto t0 = Clock::now();
  auto model = training::restore_model(run.checkpoint, training::Selection::kBest);
  const training::InMemorySource test(run.test);
  const auto preds = training::predict(*model, test);
  std::vector<double> scores;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    scores.push_back(preds[i].score_fake);
    labels.push_back(run.test[i].label);
  }
  const double acc = evaluation::accuracy(scores, labels);
  const double auc = evaluation::roc_and_auc(scores, labels).auc;
  const double secs = run.seconds + seconds_since(t0);
  const bool separable = run.oracle.train_accuracy == 1.0;
  return {separable && acc >= 0.90 && auc >= 0.95 && secs < 600,
          fmt("test accuracy %.3f (>= 0.90)", acc) + fmt(", AUC %.3f (>= 0.95)", auc) +
              fmt(", best epoch %.0f", run.checkpoint.history.best_epoch) + fmt(", %.0f s", secs) +
              (separable ? ", linearly separable" : ", NOT linearly separable")};
}

Outcome training_sanity() {
  DeskRun& run = desk_run();
  const double first = run.checkpoint.history.train_loss.front();
  const fs::path dir = test_support::fresh_temp_dir("acceptance_ckpt");
  training::save_checkpoint(dir, run.checkpoint);
  const auto loaded = training::load_checkpoint(dir);
  const training::InMemorySource test(run.test);
  bool identical = true;
  for (auto which : {training::Selection::kBest, training::Selection::kFinal}) {
    auto a = training::restore_model(run.checkpoint, which);
    auto b = training::restore_model(loaded, which);
    const auto pa = training::predict(*a, test), pb = training::predict(*b, test);
    for (std::size_t i = 0; i < pa.size(); ++i)
      identical &= std::memcmp(&pa[i].score_fake, &pb[i].score_fake, sizeof(double)) == 0 &&
                   std::memcmp(&pa[i].score_real, &pb[i].score_real, sizeof(double)) == 0;
  }
  const double bound = std::log(2.0) + 0.5;
  return {first <= bound && identical, fmt("first-epoch loss %.4f", first) + fmt(" (<= %.4f)", bound) +
                                           (identical ? ", reload bit-identical" : ", reload differs")};
}

Outcome crop_geometry() {
  using facecrop::FaceBox;
  const FaceBox a = facecrop::enlarge_box({100, 100, 200, 200}, 1.3, 640, 480);
  const FaceBox b = facecrop::enlarge_box({0, 0, 100, 100}, 1.3, 640, 480);
  const bool exact = a == FaceBox{85, 85, 215, 215} && b == FaceBox{0, 0, 115, 115};
  Rng rng(505);
  bool shapes = true;
  for (int i = 0; i < 50; ++i) {
    const int w = 64 + static_cast<int>(rng.uniform_below(600)), h = 64 + static_cast<int>(rng.uniform_below(400));
    Image8 frame(h, w, 3, static_cast<std::uint8_t>(i));
    const double x0 = rng.uniform(0, w - 20), y0 = rng.uniform(0, h - 20);
    const double side = rng.uniform(10, std::min(w - x0, h - y0));
    const auto crop = facecrop::enlarge_and_crop(frame, {x0, y0, x0 + side, y0 + side});
    shapes &= crop.image.height() == 224 && crop.image.width() == 224 && crop.image.channels() == 3;
  }
  for (const FaceBox& box : {FaceBox{100, 100, 200, 200}, FaceBox{0, 0, 100, 100}}) {
    const auto crop = facecrop::enlarge_and_crop(Image8(480, 640, 3), box);
    shapes &= crop.image.height() == 224 && crop.image.width() == 224 && crop.image.channels() == 3;
  }
  return {exact && shapes, std::string(exact ? "enlargement and edge clamp exact" : "enlargement cases wrong") +
                               (shapes ? ", all crops 224x224x3" : ", wrong crop shape")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"codec exactness", codec_exactness},
      {"first-layer adaptation", adaptation_equivalence},
      {"AUC oracle equivalence", auc_oracle},
      {"split integrity", split_integrity},
      {"synthetic GSD fidelity", gsd_fidelity},
      {"desk-scale end-to-end", desk_end_to_end},
      {"training sanity", training_sanity},
      {"crop geometry", crop_geometry},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
