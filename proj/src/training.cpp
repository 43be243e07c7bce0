#include "surfake/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/nn/serialize.hpp"

namespace surfake::training {

namespace fs = std::filesystem;
using ingestion::Label;

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  nn::backbone_spec(backbone);
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (optimizer != "sgd") throw ConfigError("optimizer must be \"sgd\"");
  if (loss != "cross_entropy") throw ConfigError("loss must be \"cross_entropy\"");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  const int side = nn::backbone_spec(backbone).input_side;
  for (const auto* n : {&rgb_normalization, &gsd_normalization}) {
    if (!*n) continue;
    (*n)->validate();
    if ((*n)->input_side != side) {
      throw ConfigError(backbone + " expects input_side " + std::to_string(side));
    }
  }
}

fusion::BranchNormalization TrainConfig::normalization() const {
  const auto base = fusion::NormalizationSpec::for_backbone(backbone);
  return {rgb_normalization.value_or(base), gsd_normalization.value_or(base)};
}

Json to_json(const TrainConfig& c) {
  Json j{{"backbone", c.backbone},
         {"input_mode", fusion::to_string(c.input_mode)},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"optimizer", c.optimizer},
         {"momentum", c.momentum},
         {"weight_decay", c.weight_decay},
         {"learning_rate", c.learning_rate},
         {"loss", c.loss},
         {"seed", c.seed},
         {"forgery", c.forgery ? Json(ingestion::to_string(*c.forgery)) : Json("all")},
         {"pretrained", c.pretrained}};
  if (c.rgb_normalization) j["rgb_normalization"] = fusion::to_json(*c.rgb_normalization);
  if (c.gsd_normalization) j["gsd_normalization"] = fusion::to_json(*c.gsd_normalization);
  return j;
}

TrainConfig train_config_from_json(const Json& json) {
  if (!json.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : json.items()) {
    try {
      if (key == "backbone") c.backbone = v.get<std::string>();
      else if (key == "input_mode") c.input_mode = fusion::parse_input_mode(v.get<std::string>());
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "optimizer") c.optimizer = v.get<std::string>();
      else if (key == "momentum") c.momentum = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "loss") c.loss = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "forgery") {
        const auto s = v.get<std::string>();
        if (s == "all") {
          c.forgery.reset();
        } else {
          c.forgery = ingestion::parse_forgery(s);
          if (*c.forgery == ingestion::Forgery::kNone) throw ConfigError("forgery must name a manipulation");
        }
      } else if (key == "pretrained") c.pretrained = v.get<bool>();
      else if (key == "rgb_normalization" || key == "gsd_normalization") {
        // Resolved against the backbone defaults once all keys are read.
      } else throw ConfigError("unknown train config key '" + key + "'");
    } catch (const Json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    } catch (const InvalidInputError& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
  nn::backbone_spec(c.backbone);
  const auto base = fusion::NormalizationSpec::for_backbone(c.backbone);
  if (json.contains("rgb_normalization")) c.rgb_normalization = fusion::normalization_from_json(json["rgb_normalization"], base);
  if (json.contains("gsd_normalization")) c.gsd_normalization = fusion::normalization_from_json(json["gsd_normalization"], base);
  c.validate();
  return c;
}

// ---------------------------------------------------------------- sources

FeatureSource::FeatureSource(fs::path dir, std::vector<features::SampleRef> refs,
                             fusion::InputMode mode, fusion::BranchNormalization norm)
    : dir_(std::move(dir)), refs_(std::move(refs)), mode_(mode), norm_(std::move(norm)) {}

fusion::FusedSample FeatureSource::get(std::size_t i) const {
  const auto& ref = refs_.at(i);
  Image8 rgb, gsd;
  if (mode_ != fusion::InputMode::kGsd) rgb = read_image(dir_ / ref.entry.rgb);
  if (mode_ != fusion::InputMode::kRgb) {
    if (ref.entry.gsd.empty()) {
      throw MissingArtifactError("no GSD image for " + ref.entry.video_id + " frame " +
                                 std::to_string(ref.entry.frame_index));
    }
    gsd = read_image(dir_ / ref.entry.gsd);
  }
  fusion::FusedSample s;
  s.tensor = fusion::build_input(rgb, gsd, mode_, norm_);
  s.label = ref.label;
  s.provenance = {ref.entry.video_id, ref.entry.frame_index, ref.forgery};
  return s;
}

Tensor make_batch(const SampleSource& source, const std::vector<std::size_t>& indices,
                  std::size_t begin, std::size_t end) {
  const int n = static_cast<int>(end - begin);
  std::vector<fusion::FusedSample> items(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      items[i] = source.get(indices[begin + i]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  const auto& shape = items.front().tensor.shape();
  std::vector<int> batch_shape{n};
  batch_shape.insert(batch_shape.end(), shape.begin(), shape.end());
  Tensor batch(batch_shape);
  const std::size_t stride = items.front().tensor.size();
  for (int i = 0; i < n; ++i) {
    if (items[i].tensor.shape() != shape) {
      throw InvalidInputError("samples in a batch differ in shape: " + shape_string(shape) + " vs " +
                              shape_string(items[i].tensor.shape()));
    }
    std::copy(items[i].tensor.data(), items[i].tensor.data() + stride, batch.data() + i * stride);
  }
  return batch;
}

// ------------------------------------------------------------------- loss

double cross_entropy(const Tensor& logits, const std::vector<int>& targets, Tensor* grad) {
  const int n = logits.dim(0);
  if (grad) *grad = Tensor(logits.shape());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = logits[2 * i], b = logits[2 * i + 1];
    const double m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    const int t = targets[i];
    total += lse - (t == 0 ? a : b);
    if (grad) {
      const double p1 = std::exp(b - lse);
      const double p0 = std::exp(a - lse);
      (*grad)[2 * i] = static_cast<float>((p0 - (t == 0)) / n);
      (*grad)[2 * i + 1] = static_cast<float>((p1 - (t == 1)) / n);
    }
  }
  return total / n;
}

// ---------------------------------------------------------------- weights

nn::StateDict load_registered_weights(const std::string& backbone) {
  const char* root = std::getenv("SURFAKE_WEIGHTS_DIR");
  if (!root || !*root) {
    throw MissingArtifactError("pretrained weights requested but SURFAKE_WEIGHTS_DIR is not set");
  }
  const fs::path registry = fs::path(root) / "registry.json";
  if (!fs::exists(registry)) throw MissingArtifactError("weights registry not found: " + registry.string());
  const Json reg = read_json(registry);
  if (!reg.contains(backbone)) {
    throw MissingArtifactError("no registered weights for '" + backbone + "' in " + registry.string());
  }
  const auto& entry = reg[backbone];
  fs::path path = entry.at("path").get<std::string>();
  if (path.is_relative()) path = fs::path(root) / path;
  if (!fs::exists(path)) throw MissingArtifactError("registered weights missing: " + path.string());
  const std::string expected = entry.at("sha256").get<std::string>();
  const std::string actual = sha256_file(path);
  if (actual != expected) {
    throw InvalidInputError("weights hash mismatch for " + path.string() + ": expected " + expected +
                            ", got " + actual);
  }
  return nn::load_tensors(path);
}

std::unique_ptr<nn::Classifier> initial_model(const TrainConfig& config) {
  auto model = nn::build_classifier(config.backbone, config.seed);
  if (config.pretrained) {
    const auto report = model->load_state(load_registered_weights(config.backbone), false);
    spdlog::info("loaded {} pretrained tensors for {}", report.loaded.size(), config.backbone);
    for (const auto& name : report.mismatched) spdlog::info("kept fresh initialization for {}", name);
    for (const auto& name : report.missing) spdlog::warn("pretrained weights lack {}", name);
  }
  if (config.input_mode == fusion::InputMode::kRgbGsd) fusion::adapt_classifier(*model);
  return model;
}

// --------------------------------------------------------------- training

namespace {

std::vector<int> all_labels(const SampleSource& source) {
  std::vector<int> labels(source.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = source.label(i) == Label::kFake ? 1 : 0;
  return labels;
}

double evaluate_loss(nn::Classifier& model, const SampleSource& source, const std::vector<int>& labels,
                     int batch_size) {
  if (source.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(source.size());
  std::iota(idx.begin(), idx.end(), 0);
  double total = 0.0;
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t e = std::min(idx.size(), b + batch_size);
    const Tensor logits = model.forward(make_batch(source, idx, b, e), nn::Mode::kEval);
    const std::vector<int> t(labels.begin() + b, labels.begin() + e);
    total += cross_entropy(logits, t, nullptr) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(source.size());
}

// SGD with momentum and coupled weight decay, matching torch.optim.SGD.
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::Classifier& model) {
    model.visit([&](const std::string& name, nn::Parameter& p) {
      if (!p.trainable) return;
      auto [it, fresh] = buffers_.try_emplace(name);
      Tensor& buf = it->second;
      if (fresh) buf = Tensor(p.value.shape());
      float* w = p.value.data();
      const float* g = p.grad.data();
      float* v = buf.data();
      const float lr = static_cast<float>(lr_);
      const float mom = static_cast<float>(momentum_);
      const float wd = static_cast<float>(weight_decay_);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const float d = g[i] + wd * w[i];
        v[i] = fresh ? d : mom * v[i] + d;
        w[i] -= lr * v[i];
      }
    });
  }

 private:
  double lr_, momentum_, weight_decay_;
  std::map<std::string, Tensor> buffers_;
};

}  // namespace

Checkpoint train(const TrainConfig& config, const SampleSource& train_data,
                 const SampleSource& val_data, const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.size() == 0) throw InvalidInputError("training split is empty");
  auto model = initial_model(config);
  const auto probe = train_data.get(0);
  if (probe.tensor.rank() != 3 || probe.tensor.dim(0) != model->in_channels()) {
    throw InvalidInputError("sample shape " + shape_string(probe.tensor.shape()) + " does not match " +
                            std::string(fusion::to_string(config.input_mode)) + " input");
  }

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.final_params = model->state();
  ckpt.best_params = ckpt.final_params;

  const auto train_labels = all_labels(train_data);
  const auto val_labels = all_labels(val_data);
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Sgd sgd(config.learning_rate, config.momentum, config.weight_decay);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    int batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++batch_no) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      std::vector<int> targets;
      for (std::size_t i = b; i < e; ++i) targets.push_back(train_labels[order[i]]);
      const Tensor logits = model->forward(make_batch(train_data, order, b, e), nn::Mode::kTrain);
      Tensor grad;
      const double loss = cross_entropy(logits, targets, &grad);
      if (!std::isfinite(loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_no));
      }
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const int pred = logits[2 * i + 1] > logits[2 * i] ? 1 : 0;
        correct += pred == targets[i];
      }
      model->zero_grad();
      model->backward(grad);
      sgd.step(*model);
      loss_sum += loss * static_cast<double>(e - b);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_loss = evaluate_loss(*model, val_data, val_labels, config.batch_size);
    ckpt.history.train_loss.push_back(train_loss);
    ckpt.history.val_loss.push_back(val_loss);
    ckpt.history.train_accuracy.push_back(static_cast<double>(correct) / order.size());
    ckpt.epoch = epoch;
    // Without validation data the latest epoch counts as best.
    const bool improved = std::isnan(val_loss) || val_loss < best_val;
    if (improved) {
      if (!std::isnan(val_loss)) best_val = val_loss;
      ckpt.history.best_epoch = epoch;
      ckpt.best_params = model->state();
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
  }
  ckpt.final_params = model->state();
  return ckpt;
}

std::unique_ptr<nn::Classifier> restore_model(const Checkpoint& checkpoint, Selection which) {
  auto model = nn::build_classifier(checkpoint.config.backbone, checkpoint.config.seed);
  if (checkpoint.config.input_mode == fusion::InputMode::kRgbGsd) fusion::adapt_classifier(*model);
  model->load_state(which == Selection::kBest ? checkpoint.best_params : checkpoint.final_params, true);
  return model;
}

// ------------------------------------------------------------- checkpoint

namespace {

Json nullable(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double from_nullable(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  nn::save_tensors(dir / "params_final.bin", ckpt.final_params);
  nn::save_tensors(dir / "params_best.bin", ckpt.best_params);
  write_json(dir / "config.json", Json{{"train", to_json(ckpt.config)},
                                       {"backbone", ckpt.config.backbone},
                                       {"input_mode", fusion::to_string(ckpt.config.input_mode)},
                                       {"epoch", ckpt.epoch}});
  Json train = Json::array(), val = Json::array(), acc = Json::array();
  for (double v : ckpt.history.train_loss) train.push_back(nullable(v));
  for (double v : ckpt.history.val_loss) val.push_back(nullable(v));
  for (double v : ckpt.history.train_accuracy) acc.push_back(nullable(v));
  write_json(dir / "history.json", Json{{"epochs", ckpt.epoch},
                                        {"train_loss", train},
                                        {"val_loss", val},
                                        {"train_accuracy", acc},
                                        {"best_epoch", ckpt.history.best_epoch}});
}

Checkpoint load_checkpoint(const fs::path& dir) {
  for (const char* name : {"config.json", "history.json", "params_final.bin", "params_best.bin"}) {
    if (!fs::exists(dir / name)) throw MissingArtifactError("checkpoint incomplete: missing " + (dir / name).string());
  }
  Checkpoint ckpt;
  try {
    const Json cfg = read_json(dir / "config.json");
    ckpt.config = train_config_from_json(cfg.at("train"));
    ckpt.epoch = cfg.at("epoch").get<int>();
    const Json hist = read_json(dir / "history.json");
    for (const auto& v : hist.at("train_loss")) ckpt.history.train_loss.push_back(from_nullable(v));
    for (const auto& v : hist.at("val_loss")) ckpt.history.val_loss.push_back(from_nullable(v));
    for (const auto& v : hist.at("train_accuracy")) ckpt.history.train_accuracy.push_back(from_nullable(v));
    ckpt.history.best_epoch = hist.at("best_epoch").get<int>();
  } catch (const Json::exception& e) {
    throw InvalidInputError("malformed checkpoint in " + dir.string() + ": " + e.what());
  }
  if (static_cast<int>(ckpt.history.train_loss.size()) != ckpt.epoch) {
    throw InvalidInputError("checkpoint history length does not match its epoch count");
  }
  ckpt.final_params = nn::load_tensors(dir / "params_final.bin");
  ckpt.best_params = nn::load_tensors(dir / "params_best.bin");
  return ckpt;
}

// -------------------------------------------------------------- inference

std::vector<Prediction> predict(nn::Classifier& model, const SampleSource& samples, int batch_size) {
  std::vector<Prediction> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(batch_size));
    const Tensor logits = model.forward(make_batch(samples, idx, b, e), nn::Mode::kEval);
    for (std::size_t i = 0; i < e - b; ++i) {
      const double a = logits[2 * i], c = logits[2 * i + 1];
      const double m = std::max(a, c);
      const double ea = std::exp(a - m), ec = std::exp(c - m);
      Prediction p;
      p.score_fake = ec / (ea + ec);
      p.score_real = ea / (ea + ec);
      p.label = p.score_fake >= 0.5 ? Label::kFake : Label::kReal;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<std::vector<float>> extract_activations(nn::Classifier& model, const SampleSource& samples,
                                                    int batch_size) {
  std::vector<std::vector<float>> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t e = std::min(idx.size(), b + static_cast<std::size_t>(batch_size));
    const Tensor f = model.features(make_batch(samples, idx, b, e));
    const int width = f.dim(1);
    for (std::size_t i = 0; i < e - b; ++i) {
      out.emplace_back(f.data() + i * width, f.data() + (i + 1) * width);
    }
  }
  return out;
}

}  // namespace surfake::training
