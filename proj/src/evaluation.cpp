#include "surfake/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/common/rng.hpp"

namespace surfake::evaluation {

namespace fs = std::filesystem;

namespace {

void check_inputs(std::span<const double> scores, std::span<const Label> labels, const char* who) {
  if (scores.size() != labels.size()) {
    throw InvalidInputError(std::string(who) + ": scores and labels differ in length");
  }
  if (scores.empty()) throw InvalidInputError(std::string(who) + ": empty input");
}

}  // namespace

// ---------------------------------------------------------------- metrics

Confusion confusion(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  check_inputs(scores, labels, "confusion");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_fake = scores[i] >= threshold;
    const bool fake = labels[i] == Label::kFake;
    if (predicted_fake && fake) ++c.tp;
    else if (predicted_fake) ++c.fp;
    else if (fake) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  const Confusion c = confusion(scores, labels, threshold);
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

Roc roc_and_auc(std::span<const double> scores, std::span<const Label> labels) {
  check_inputs(scores, labels, "roc_and_auc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::uint64_t positives = 0, negatives = 0;
  for (Label l : labels) (l == Label::kFake ? positives : negatives) += 1;
  if (positives == 0 || negatives == 0) {
    throw InvalidInputError("roc_and_auc: both real and fake samples are required");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidInputError("roc_and_auc: NaN score");
  }
  Roc roc;
  roc.points.push_back({0.0, 0.0});
  // Twice the area in units of one (fake, real) pair, kept integral.
  unsigned __int128 doubled_area = 0;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::uint64_t step_tp = 0, step_fp = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      (labels[order[i]] == Label::kFake ? step_tp : step_fp) += 1;
    }
    doubled_area += static_cast<unsigned __int128>(step_fp) * (2 * tp + step_tp);
    tp += step_tp;
    fp += step_fp;
    roc.points.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
  }
  roc.auc = static_cast<double>(static_cast<long double>(doubled_area) /
                                (2.0L * positives * negatives));
  return roc;
}

// ------------------------------------------------------------------ t-SNE

namespace {

// Row of conditional affinities for point i at the requested perplexity.
void calibrate_row(const std::vector<double>& dist, std::size_t n, std::size_t i, double perplexity,
                   double* row) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  const double* d = dist.data() + i * n;
  // Shift by the nearest distance for numerical range.
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) if (j != i) dmin = std::min(dmin, d[j]);
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) { row[j] = 0.0; continue; }
      row[j] = std::exp(-(d[j] - dmin) * beta);
      sum += row[j];
      weighted += (d[j] - dmin) * row[j];
    }
    const double entropy = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    const double diff = entropy - target;
    if (std::abs(diff) < 1e-5) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
}

}  // namespace

std::vector<std::array<double, 2>> embed_2d(const std::vector<std::vector<float>>& vectors,
                                            std::uint64_t seed, const TsneOptions& options) {
  const std::size_t n = vectors.size();
  if (n < 2) throw InvalidInputError("embed_2d: need at least two vectors");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw InvalidInputError("embed_2d: vectors differ in dimension");
  }
  const double perplexity = std::min(options.perplexity, std::max(1.0, (static_cast<double>(n) - 1.0) / 3.0));

  std::vector<double> dist(n * n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double t = static_cast<double>(vectors[i][k]) - vectors[j][k];
        s += t * t;
      }
      dist[i * n + j] = s;
    }
  }
  std::vector<double> cond(n * n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) calibrate_row(dist, n, i, perplexity, cond.data() + i * n);
  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * n), 1e-12);
    }
  }

  const double learning_rate =
      options.learning_rate > 0 ? options.learning_rate : std::max(static_cast<double>(n) / 48.0, 50.0);
  Rng rng(derive_seed(seed, "embedding"));
  std::vector<double> y(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n);
  for (double& v : y) v = rng.normal(0.0, 1e-4);
  std::vector<double> num(n * n);
  constexpr int kExaggerationIters = 250;
  for (int iter = 0; iter < options.iterations; ++iter) {
    const double exaggeration = iter < kExaggerationIters ? 12.0 : 1.0;
    const double momentum = iter < kExaggerationIters ? 0.5 : 0.8;
    double z = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : z)
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) { num[i * n + j] = 0.0; continue; }
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        z += num[i * n + j];
      }
    }
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double w = (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
        gx += w * (y[2 * i] - y[2 * j]);
        gy += w * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      gains[k] = (grad[k] > 0) != (update[k] > 0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - learning_rate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) { mx += y[2 * i]; my += y[2 * i + 1]; }
    mx /= n;
    my /= n;
    for (std::size_t i = 0; i < n; ++i) { y[2 * i] -= mx; y[2 * i + 1] -= my; }
  }
  std::vector<std::array<double, 2>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {y[2 * i], y[2 * i + 1]};
  return out;
}

std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= cap) return idx;
  Rng rng(derive_seed(seed, "embedding"));
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ------------------------------------------------------------------ plots

namespace {

constexpr int kCanvas = 560;
constexpr int kMargin = 60;

cv::Scalar forgery_color(Forgery f) {
  switch (f) {
    case Forgery::kDF: return {40, 40, 220};
    case Forgery::kF2F: return {200, 120, 30};
    case Forgery::kFSH: return {0, 150, 255};
    case Forgery::kFS: return {60, 170, 60};
    case Forgery::kNT: return {170, 60, 160};
    case Forgery::kNone: break;
  }
  return {0, 0, 0};
}

void save_plot(const fs::path& path, const cv::Mat& canvas) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), canvas)) throw Error("cannot write plot " + path.string());
}

}  // namespace

void write_roc_plot(const fs::path& path, const std::vector<RocCurve>& curves) {
  cv::Mat canvas(kCanvas, kCanvas, CV_8UC3, cv::Scalar(255, 255, 255));
  const int side = kCanvas - 2 * kMargin;
  auto to_px = [&](double fpr, double tpr) {
    return cv::Point(kMargin + static_cast<int>(std::lround(fpr * side)),
                     kCanvas - kMargin - static_cast<int>(std::lround(tpr * side)));
  };
  cv::rectangle(canvas, to_px(0, 1), to_px(1, 0), cv::Scalar(0, 0, 0), 1);
  cv::line(canvas, to_px(0, 0), to_px(1, 1), cv::Scalar(170, 170, 170), 1, cv::LINE_AA);
  for (int t = 0; t <= 4; ++t) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%.2f", t / 4.0);
    cv::putText(canvas, buf, to_px(t / 4.0, 0) + cv::Point(-14, 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
    cv::putText(canvas, buf, to_px(0, t / 4.0) + cv::Point(-42, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  }
  cv::putText(canvas, "False positive rate", {kCanvas / 2 - 70, kCanvas - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  cv::putText(canvas, "True positive rate", {8, kMargin - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  const cv::Scalar palette[] = {{40, 40, 220}, {200, 120, 30}, {0, 150, 255}, {60, 170, 60}, {170, 60, 160}};
  int k = 0;
  for (const auto& curve : curves) {
    const cv::Scalar color = palette[k % 5];
    std::vector<cv::Point> pts;
    for (const auto& p : curve.roc.points) pts.push_back(to_px(p.fpr, p.tpr));
    cv::polylines(canvas, pts, false, color, 2, cv::LINE_AA);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s (AUC = %.3f)", curve.name.c_str(), curve.roc.auc);
    const cv::Point at = to_px(0.45, 0.05 + 0.07 * (static_cast<int>(curves.size()) - 1 - k));
    cv::line(canvas, at + cv::Point(0, -4), at + cv::Point(20, -4), color, 2);
    cv::putText(canvas, buf, at + cv::Point(26, 0), cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0}, 1, cv::LINE_AA);
    ++k;
  }
  save_plot(path, canvas);
}

void write_scatter_plot(const fs::path& path, const std::vector<ScatterPoint>& points,
                        const std::string& title) {
  cv::Mat canvas(kCanvas, kCanvas, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!points.empty()) {
    x0 = x1 = points[0].xy[0];
    y0 = y1 = points[0].xy[1];
    for (const auto& p : points) {
      x0 = std::min(x0, p.xy[0]); x1 = std::max(x1, p.xy[0]);
      y0 = std::min(y0, p.xy[1]); y1 = std::max(y1, p.xy[1]);
    }
  }
  const double sx = x1 > x0 ? x1 - x0 : 1.0, sy = y1 > y0 ? y1 - y0 : 1.0;
  const int side = kCanvas - 2 * kMargin;
  // Reals first so fakes stay visible on top.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& p : points) {
      if ((p.label == Label::kFake) != (pass == 1)) continue;
      const cv::Point at(kMargin + static_cast<int>(std::lround((p.xy[0] - x0) / sx * side)),
                         kCanvas - kMargin - static_cast<int>(std::lround((p.xy[1] - y0) / sy * side)));
      const cv::Scalar color = p.label == Label::kReal ? cv::Scalar(0, 0, 0) : forgery_color(p.forgery);
      cv::circle(canvas, at, 3, color, cv::FILLED, cv::LINE_AA);
    }
  }
  cv::putText(canvas, title, {kMargin, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {0, 0, 0}, 1, cv::LINE_AA);
  save_plot(path, canvas);
}

void write_loss_plot(const fs::path& path, const training::History& history, const std::string& title) {
  cv::Mat canvas(kCanvas, kCanvas, CV_8UC3, cv::Scalar(255, 255, 255));
  const int side = kCanvas - 2 * kMargin;
  double hi = 0.0;
  for (const auto* series : {&history.train_loss, &history.val_loss}) {
    for (double v : *series) if (std::isfinite(v)) hi = std::max(hi, v);
  }
  if (hi <= 0.0) hi = 1.0;
  const std::size_t epochs = history.train_loss.size();
  auto to_px = [&](std::size_t epoch, double loss) {
    const double fx = epochs > 1 ? static_cast<double>(epoch - 1) / (epochs - 1) : 0.0;
    return cv::Point(kMargin + static_cast<int>(std::lround(fx * side)),
                     kCanvas - kMargin - static_cast<int>(std::lround(loss / hi * side)));
  };
  cv::rectangle(canvas, {kMargin, kMargin}, {kCanvas - kMargin, kCanvas - kMargin}, cv::Scalar(0, 0, 0), 1);
  const std::pair<const std::vector<double>*, cv::Scalar> series[] = {
      {&history.train_loss, {200, 120, 30}}, {&history.val_loss, {40, 40, 220}}};
  for (const auto& [values, color] : series) {
    std::vector<cv::Point> pts;
    for (std::size_t e = 0; e < values->size(); ++e) {
      if (std::isfinite((*values)[e])) pts.push_back(to_px(e + 1, (*values)[e]));
    }
    if (pts.size() > 1) cv::polylines(canvas, pts, false, color, 2, cv::LINE_AA);
    for (const auto& pt : pts) cv::circle(canvas, pt, 2, color, cv::FILLED);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max %.3f", hi);
  cv::putText(canvas, buf, {8, kMargin + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  cv::putText(canvas, title + "  (blue: train, red: val)", {kMargin, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.5,
              {0, 0, 0}, 1, cv::LINE_AA);
  cv::putText(canvas, "epoch", {kCanvas / 2 - 20, kCanvas - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  save_plot(path, canvas);
}

// ----------------------------------------------------------------- voting

std::vector<VideoVote> video_votes(const std::vector<std::string>& video_ids,
                                   std::span<const double> scores, std::span<const Label> labels,
                                   double threshold) {
  check_inputs(scores, labels, "video_votes");
  if (video_ids.size() != scores.size()) throw InvalidInputError("video_votes: id count mismatch");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < video_ids.size(); ++i) groups[video_ids[i]].push_back(i);
  std::vector<VideoVote> out;
  for (const auto& [id, idx] : groups) {
    std::size_t fake_votes = 0;
    double sum = 0.0;
    for (std::size_t i : idx) {
      fake_votes += scores[i] >= threshold;
      sum += scores[i];
    }
    VideoVote v{id, labels[idx.front()], static_cast<double>(fake_votes) / idx.size(), sum / idx.size(),
                Label::kReal};
    if (2 * fake_votes > idx.size() || (2 * fake_votes == idx.size() && v.mean_score >= threshold)) {
      v.predicted = Label::kFake;
    }
    out.push_back(v);
  }
  return out;
}

// ----------------------------------------------------------------- report

Json to_json(const EvalReport& report) {
  Json per = Json::object();
  for (const auto& [forgery, r] : report.per_forgery) {
    Json roc = Json::array();
    for (const auto& p : r.roc.points) roc.push_back({p.fpr, p.tpr});
    Json by = Json::object();
    for (const auto& [name, m] : r.by_selection) by[name] = {{"accuracy", m.accuracy}, {"auc", m.auc}};
    Json j{{"accuracy", r.accuracy},
           {"auc", r.auc},
           {"roc", roc},
           {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
           {"frames", r.confusion.total()},
           {"checkpoint", r.checkpoint},
           {"by_selection", by},
           {"plots", r.plots}};
    if (r.video_accuracy) j["video_accuracy"] = *r.video_accuracy;
    per[std::string(ingestion::to_string(forgery))] = j;
  }
  return Json{{"per_forgery", per},
              {"averages", {{"accuracy", report.average.accuracy}, {"auc", report.average.auc}}},
              {"model_selection", report.model_selection},
              {"threshold", report.threshold},
              {"config_fingerprint", report.config_fingerprint}};
}

namespace {

std::string selection_name(training::Selection s) {
  return s == training::Selection::kBest ? "best" : "final";
}

}  // namespace

EvalReport evaluate(const std::vector<CheckpointRef>& checkpoints, const features::FeatureIndex& index,
                    const ingestion::DatasetManifest& manifest, const ingestion::SplitManifest& split,
                    const fs::path& out_dir, const EvalOptions& options) {
  if (checkpoints.empty()) throw ConfigError("evaluate: no checkpoint given");
  constexpr double kThreshold = 0.5;
  EvalReport report;
  report.model_selection = selection_name(options.selection);
  report.threshold = kThreshold;
  fs::create_directories(out_dir);

  Json fingerprint{{"split_seed", split.seed}, {"split_source", split.source},
                   {"selection", report.model_selection}, {"threshold", kThreshold},
                   {"video_voting", options.video_voting}, {"configs", Json::array()}};

  for (const auto& ref : checkpoints) {
    const auto& ckpt = ref.checkpoint;
    fingerprint["configs"].push_back(training::to_json(ckpt.config));
    std::vector<Forgery> targets;
    if (ckpt.config.forgery) {
      targets.push_back(*ckpt.config.forgery);
    } else {
      std::set<Forgery> present;
      for (const auto& rec : manifest.records) {
        const auto s = split.find(rec.source_video_id);
        if (rec.label == Label::kFake && s && *s == ingestion::Split::kTest) present.insert(rec.forgery);
      }
      targets.assign(present.begin(), present.end());
    }
    const bool same_weights = ckpt.best_params == ckpt.final_params;
    for (Forgery forgery : targets) {
      if (report.per_forgery.count(forgery)) {
        throw ConfigError("two checkpoints target " + std::string(ingestion::to_string(forgery)));
      }
      features::require_features(index, manifest, split, ingestion::Split::kTest, forgery, ckpt.config.input_mode);
      auto refs = features::select_samples(index, manifest, split, ingestion::Split::kTest, forgery);
      std::vector<Label> labels;
      std::vector<std::string> ids;
      for (const auto& r : refs) {
        labels.push_back(r.label);
        ids.push_back(r.entry.video_id);
      }
      const training::FeatureSource source(index.dir, refs, ckpt.config.input_mode, ckpt.config.normalization());
      const std::string fname(ingestion::to_string(forgery));
      spdlog::info("evaluating {} on {} test frames", fname, refs.size());

      ForgeryResult result;
      result.forgery = forgery;
      result.checkpoint = ref.dir.string();
      std::vector<double> primary_scores;
      std::unique_ptr<nn::Classifier> primary_model;
      std::vector<double> cached_scores;
      for (auto sel : {training::Selection::kBest, training::Selection::kFinal}) {
        std::vector<double> scores;
        auto model = training::restore_model(ckpt, sel);
        if (same_weights && !cached_scores.empty()) {
          scores = cached_scores;
        } else {
          for (const auto& p : training::predict(*model, source, options.batch_size)) scores.push_back(p.score_fake);
          cached_scores = scores;
        }
        const auto roc = roc_and_auc(scores, labels);
        result.by_selection[selection_name(sel)] = {accuracy(scores, labels, kThreshold), roc.auc};
        if (sel == options.selection) {
          primary_scores = scores;
          primary_model = std::move(model);
        }
      }
      result.roc = roc_and_auc(primary_scores, labels);
      result.auc = result.roc.auc;
      result.confusion = confusion(primary_scores, labels, kThreshold);
      result.accuracy = accuracy(primary_scores, labels, kThreshold);
      if (options.video_voting) {
        const auto votes = video_votes(ids, primary_scores, labels, kThreshold);
        std::size_t right = 0;
        for (const auto& v : votes) right += v.predicted == v.truth;
        result.video_accuracy = static_cast<double>(right) / votes.size();
      }
      const std::string roc_name = "roc_" + fname + ".png";
      write_roc_plot(out_dir / roc_name, {{fname, result.roc}});
      result.plots["roc"] = roc_name;
      if (options.tsne_cap > 0 && refs.size() >= 2) {
        const auto keep = subsample(refs.size(), options.tsne_cap, options.seed);
        std::vector<features::SampleRef> kept;
        for (std::size_t i : keep) kept.push_back(refs[i]);
        const training::FeatureSource subset(index.dir, kept, ckpt.config.input_mode, ckpt.config.normalization());
        const auto acts = training::extract_activations(*primary_model, subset, options.batch_size);
        const auto xy = embed_2d(acts, options.seed);
        std::vector<ScatterPoint> pts;
        for (std::size_t i = 0; i < kept.size(); ++i) pts.push_back({xy[i], kept[i].label, kept[i].forgery});
        const std::string tsne_name = "tsne_" + fname + ".png";
        write_scatter_plot(out_dir / tsne_name, pts, "t-SNE " + fname + " (" + ckpt.config.backbone + ")");
        result.plots["tsne"] = tsne_name;
      }
      report.per_forgery[forgery] = std::move(result);
    }
  }
  if (report.per_forgery.empty()) throw InvalidInputError("evaluate: test split has no manipulated videos");
  for (const auto& [f, r] : report.per_forgery) {
    report.average.accuracy += r.accuracy;
    report.average.auc += r.auc;
  }
  report.average.accuracy /= report.per_forgery.size();
  report.average.auc /= report.per_forgery.size();
  report.config_fingerprint = sha256_hex(fingerprint.dump());
  write_json(out_dir / "report.json", to_json(report));
  return report;
}

}  // namespace surfake::evaluation
