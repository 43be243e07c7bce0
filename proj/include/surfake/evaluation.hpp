#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfake/features.hpp"
#include "surfake/ingestion.hpp"
#include "surfake/training.hpp"

namespace surfake::evaluation {

using ingestion::Forgery;
using ingestion::Label;

// Fraction of samples where (score >= threshold) agrees with label == fake.
double accuracy(std::span<const double> scores, std::span<const Label> labels, double threshold = 0.5);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};
Confusion confusion(std::span<const double> scores, std::span<const Label> labels, double threshold = 0.5);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct Roc {
  std::vector<RocPoint> points;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// One ROC step per distinct score (equal scores form one step); AUC by the
// trapezoidal rule.
Roc roc_and_auc(std::span<const double> scores, std::span<const Label> labels);

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 0.0;  // 0 picks max(n / 48, 50)
};

// Exact t-SNE to two dimensions, deterministic for a given seed.
std::vector<std::array<double, 2>> embed_2d(const std::vector<std::vector<float>>& vectors,
                                            std::uint64_t seed, const TsneOptions& options = {});

// Sorted indices of a seeded random subset of size min(n, cap).
std::vector<std::size_t> subsample(std::size_t n, std::size_t cap, std::uint64_t seed);

struct RocCurve {
  std::string name;
  Roc roc;
};
void write_roc_plot(const std::filesystem::path& path, const std::vector<RocCurve>& curves);

struct ScatterPoint {
  std::array<double, 2> xy;
  Label label;
  Forgery forgery;
};
void write_scatter_plot(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                        const std::string& title);

// Train and validation loss per epoch.
void write_loss_plot(const std::filesystem::path& path, const training::History& history,
                     const std::string& title);

// Per-video majority vote over frame predictions (ties go to the mean score).
struct VideoVote {
  std::string video_id;
  Label truth;
  double fake_fraction;
  double mean_score;
  Label predicted;
};
std::vector<VideoVote> video_votes(const std::vector<std::string>& video_ids,
                                   std::span<const double> scores, std::span<const Label> labels,
                                   double threshold = 0.5);

struct SelectionMetrics {
  double accuracy = 0.0;
  double auc = 0.0;
};

struct ForgeryResult {
  Forgery forgery = Forgery::kDF;
  std::string checkpoint;
  double accuracy = 0.0;
  double auc = 0.0;
  Roc roc;
  Confusion confusion;
  std::optional<double> video_accuracy;
  std::map<std::string, SelectionMetrics> by_selection;  // "best", "final"
  std::map<std::string, std::string> plots;
};

struct EvalReport {
  std::map<Forgery, ForgeryResult> per_forgery;
  SelectionMetrics average;
  std::string model_selection = "best";
  double threshold = 0.5;
  std::string config_fingerprint;
};

Json to_json(const EvalReport& report);

struct EvalOptions {
  training::Selection selection = training::Selection::kBest;
  bool video_voting = false;
  std::size_t tsne_cap = 500;  // 0 disables the embedding plot
  std::uint64_t seed = 0;
  int batch_size = 32;
};

struct CheckpointRef {
  std::filesystem::path dir;
  training::Checkpoint checkpoint;
};

// Frame-level evaluation of each checkpoint on the test portion, one binary
// problem per manipulation. Writes report.json and the plots into out_dir.
EvalReport evaluate(const std::vector<CheckpointRef>& checkpoints,
                    const features::FeatureIndex& index, const ingestion::DatasetManifest& manifest,
                    const ingestion::SplitManifest& split, const std::filesystem::path& out_dir,
                    const EvalOptions& options);

}  // namespace surfake::evaluation
