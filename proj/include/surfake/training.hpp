#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "surfake/features.hpp"
#include "surfake/fusion.hpp"
#include "surfake/nn/model.hpp"

namespace surfake::training {

struct TrainConfig {
  std::string backbone = "mobilenetv2";
  fusion::InputMode input_mode = fusion::InputMode::kRgbGsd;
  int epochs = 30;
  int batch_size = 32;
  std::string optimizer = "sgd";
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double learning_rate = 1e-3;
  std::string loss = "cross_entropy";
  std::uint64_t seed = 0;
  // Manipulation trained against the real class; nullopt pools all of them.
  std::optional<ingestion::Forgery> forgery = ingestion::Forgery::kDF;
  // Load ImageNet weights through the weights registry before training.
  bool pretrained = false;
  std::optional<fusion::NormalizationSpec> rgb_normalization;
  std::optional<fusion::NormalizationSpec> gsd_normalization;

  void validate() const;
  fusion::BranchNormalization normalization() const;
};

Json to_json(const TrainConfig& config);
// Rejects unknown keys; absent keys keep their defaults.
TrainConfig train_config_from_json(const Json& json);

// Random-access source of network-ready samples.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual fusion::FusedSample get(std::size_t i) const = 0;
  virtual ingestion::Label label(std::size_t i) const { return get(i).label; }
};

class InMemorySource : public SampleSource {
 public:
  explicit InMemorySource(std::vector<fusion::FusedSample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  fusion::FusedSample get(std::size_t i) const override { return samples_.at(i); }
  ingestion::Label label(std::size_t i) const override { return samples_.at(i).label; }

 private:
  std::vector<fusion::FusedSample> samples_;
};

// Decodes crops and GSD images from a feature directory on every access.
class FeatureSource : public SampleSource {
 public:
  FeatureSource(std::filesystem::path dir, std::vector<features::SampleRef> refs,
                fusion::InputMode mode, fusion::BranchNormalization norm);
  std::size_t size() const override { return refs_.size(); }
  fusion::FusedSample get(std::size_t i) const override;
  ingestion::Label label(std::size_t i) const override { return refs_.at(i).label; }

 private:
  std::filesystem::path dir_;
  std::vector<features::SampleRef> refs_;
  fusion::InputMode mode_;
  fusion::BranchNormalization norm_;
};

struct History {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // NaN when there is no validation data
  std::vector<double> train_accuracy;
  int best_epoch = 0;  // 1-based; 0 = initialization
};

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  nn::StateDict final_params;
  nn::StateDict best_params;  // lowest validation loss (final when no val data)
  History history;
};

enum class Selection { kBest, kFinal };

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

// Resolves ImageNet weights for `backbone` through
// $SURFAKE_WEIGHTS_DIR/registry.json ({"<backbone>": {"path", "sha256"}}).
nn::StateDict load_registered_weights(const std::string& backbone);

// Freshly initialized (optionally pretrained) model shaped for the config.
std::unique_ptr<nn::Classifier> initial_model(const TrainConfig& config);

Checkpoint train(const TrainConfig& config, const SampleSource& train_data,
                 const SampleSource& val_data, const EpochCallback& on_epoch = {});

std::unique_ptr<nn::Classifier> restore_model(const Checkpoint& checkpoint, Selection which);

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct Prediction {
  double score_fake = 0.0;
  double score_real = 0.0;
  ingestion::Label label = ingestion::Label::kReal;
};

// Stacks samples [i, i+n) into a batch tensor.
Tensor make_batch(const SampleSource& source, const std::vector<std::size_t>& indices,
                  std::size_t begin, std::size_t end);

std::vector<Prediction> predict(nn::Classifier& model, const SampleSource& samples,
                                int batch_size = 32);
std::vector<std::vector<float>> extract_activations(nn::Classifier& model,
                                                    const SampleSource& samples,
                                                    int batch_size = 32);

// Mean two-class cross-entropy of logits [N, 2]; writes d(loss)/d(logits)
// into grad when non-null.
double cross_entropy(const Tensor& logits, const std::vector<int>& targets, Tensor* grad);

}  // namespace surfake::training
