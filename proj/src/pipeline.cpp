#include "surfake/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <exception>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"
#include "surfake/facecrop.hpp"
#include "surfake/gsd.hpp"

namespace surfake::pipeline {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ config

namespace {

void check_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

// Paths embedded in detector/backend spec strings resolve against base too.
std::string resolve_spec_path(const std::string& spec, const fs::path& base) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return spec;
  const std::string kind = spec.substr(0, colon);
  if (kind != "haar" && kind != "yunet" && kind != "pretrained") return spec;
  std::string rest = spec.substr(colon + 1);
  const auto q = rest.find('?');
  const fs::path path = rest.substr(0, q);
  const std::string query = q == std::string::npos ? "" : rest.substr(q);
  return kind + ":" + resolve(path, base).string() + query;
}

std::optional<fs::path> spec_file(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) return std::nullopt;
  const std::string kind = spec.substr(0, colon);
  if (kind != "haar" && kind != "yunet" && kind != "pretrained") return std::nullopt;
  std::string rest = spec.substr(colon + 1);
  return fs::path(rest.substr(0, rest.find('?')));
}

}  // namespace

RunConfig run_config_from_json(const Json& json, const fs::path& base) {
  check_keys(json, {"dataset_root", "work_dir", "seed", "scan", "split", "crop", "gsd", "train",
                    "forgeries", "eval", "viz"}, "run config");
  RunConfig c;
  std::string root, work;
  read_field(json, "dataset_root", root, "run config");
  read_field(json, "work_dir", work, "run config");
  read_field(json, "seed", c.seed, "run config");
  if (work.empty()) throw ConfigError("run config: work_dir is required");
  c.dataset_root = resolve(root, base);
  c.work_dir = resolve(work, base);

  if (json.contains("scan")) {
    const auto& s = json["scan"];
    check_keys(s, {"layout", "compression"}, "scan");
    read_field(s, "layout", c.scan.layout, "scan");
    read_field(s, "compression", c.scan.compression, "scan");
    if (c.scan.layout != "ffpp") c.scan.layout = resolve(c.scan.layout, base).string();
  }
  if (json.contains("split")) {
    const auto& s = json["split"];
    check_keys(s, {"official_dir"}, "split");
    if (s.contains("official_dir") && !s["official_dir"].is_null()) {
      std::string dir;
      read_field(s, "official_dir", dir, "split");
      c.split.official_dir = resolve(dir, base);
    }
  }
  if (json.contains("crop")) {
    const auto& s = json["crop"];
    check_keys(s, {"detector", "frame_stride", "enlarge", "max_frames"}, "crop");
    read_field(s, "detector", c.crop.detector, "crop");
    read_field(s, "frame_stride", c.crop.frame_stride, "crop");
    read_field(s, "enlarge", c.crop.enlarge, "crop");
    read_field(s, "max_frames", c.crop.max_frames, "crop");
    c.crop.detector = resolve_spec_path(c.crop.detector, base);
    if (c.crop.frame_stride < 1) throw ConfigError("crop.frame_stride must be >= 1");
    if (!(c.crop.enlarge >= 1.0)) throw ConfigError("crop.enlarge must be >= 1");
    if (c.crop.max_frames < 0) throw ConfigError("crop.max_frames must be >= 0");
  }
  if (json.contains("gsd")) {
    const auto& s = json["gsd"];
    check_keys(s, {"backend", "raw_sidecar"}, "gsd");
    read_field(s, "backend", c.gsd.backend, "gsd");
    read_field(s, "raw_sidecar", c.gsd.raw_sidecar, "gsd");
    c.gsd.backend = resolve_spec_path(c.gsd.backend, base);
  }
  if (json.contains("train")) {
    if (json["train"].is_object() && json["train"].contains("seed")) {
      throw ConfigError("train.seed is derived from the root seed; set \"seed\" at the top level");
    }
    c.train = training::train_config_from_json(json["train"]);
  }
  c.train.seed = c.seed;
  if (json.contains("forgeries")) {
    read_field(json, "forgeries", c.forgeries, "run config");
    for (const auto& f : c.forgeries) {
      if (f != "all" && (ingestion::parse_forgery(f) == ingestion::Forgery::kNone)) {
        throw ConfigError("forgeries must name manipulations or \"all\"");
      }
    }
  }
  if (c.forgeries.empty()) {
    c.forgeries.push_back(c.train.forgery ? std::string(ingestion::to_string(*c.train.forgery)) : "all");
  }
  if (json.contains("eval")) {
    const auto& s = json["eval"];
    check_keys(s, {"selection", "video_voting", "tsne_cap"}, "eval");
    read_field(s, "selection", c.eval.selection, "eval");
    read_field(s, "video_voting", c.eval.video_voting, "eval");
    read_field(s, "tsne_cap", c.eval.tsne_cap, "eval");
    if (c.eval.selection != "best" && c.eval.selection != "final") {
      throw ConfigError("eval.selection must be \"best\" or \"final\"");
    }
  }
  if (json.contains("viz")) {
    const auto& s = json["viz"];
    check_keys(s, {"samples"}, "viz");
    read_field(s, "samples", c.viz.samples, "viz");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return run_config_from_json(read_json(path), fs::absolute(path).parent_path());
}

// ------------------------------------------------------------------ stages

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {Stage::kScan, Stage::kSplit, Stage::kCrop, Stage::kGsd,
                                            Stage::kTrain, Stage::kEval, Stage::kViz};
  return stages;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kScan: return "scan";
    case Stage::kSplit: return "split";
    case Stage::kCrop: return "crop";
    case Stage::kGsd: return "gsd";
    case Stage::kTrain: return "train";
    case Stage::kEval: return "eval";
    case Stage::kViz: return "viz";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : all_stages()) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + std::string(text) + "'");
}

std::vector<Stage> parse_stages(std::string_view text) {
  std::set<Stage> picked;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    if (item == "all") {
      picked.insert(all_stages().begin(), all_stages().end());
    } else if (!item.empty()) {
      picked.insert(parse_stage(item));
    }
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (picked.empty()) throw ConfigError("no stages selected");
  return {picked.begin(), picked.end()};
}

void scan_stage(const fs::path& root, const ScanOptions& options, const fs::path& manifest_out) {
  const auto layout = ingestion::resolve_layout(options.layout, options.compression);
  const auto manifest = ingestion::scan_dataset(root, layout);
  ingestion::save_manifest(manifest_out, manifest);
  spdlog::info("scan: {} videos, {} rejected", manifest.records.size(), manifest.rejects.size());
}

void split_stage(const fs::path& manifest_path, std::uint64_t seed, const SplitOptions& options,
                 const fs::path& split_out) {
  const auto manifest = ingestion::load_manifest(manifest_path);
  const auto split = options.official_dir ? ingestion::make_official_splits(manifest, *options.official_dir)
                                          : ingestion::make_splits(manifest, seed);
  ingestion::save_split(split_out, split);
  std::map<ingestion::Split, int> counts;
  for (const auto& [id, s] : split.assignment) ++counts[s];
  spdlog::info("split ({}): {} train, {} val, {} test real videos", split.source,
               counts[ingestion::Split::kTrain], counts[ingestion::Split::kVal], counts[ingestion::Split::kTest]);
}

CropStats crop_stage(const fs::path& manifest_path, const CropOptions& options, const fs::path& out_dir) {
  if (options.detector.empty()) throw ConfigError("crop: no face detector configured");
  if (options.frame_stride < 1) throw ConfigError("crop: frame stride must be >= 1");
  const auto manifest = ingestion::load_manifest(manifest_path);
  fs::create_directories(out_dir);
  const auto& records = manifest.records;
  std::vector<std::vector<features::FeatureEntry>> per_video(records.size());
  std::vector<Json> stats(records.size());
  std::exception_ptr failure;
#pragma omp parallel
  {
    std::unique_ptr<facecrop::FaceDetector> detector;
    try {
      detector = facecrop::make_detector(options.detector);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
#pragma omp for schedule(dynamic)
    for (std::size_t v = 0; v < records.size(); ++v) {
      if (!detector) continue;
      const auto& rec = records[v];
      int visited = 0, skipped = 0;
      std::string error;
      try {
        ingestion::for_each_sampled_frame(rec.path, options.frame_stride, [&](int index, const Image8& frame) {
          if (options.max_frames > 0 && visited >= options.max_frames) return;
          ++visited;
          const auto box = facecrop::detect_face(frame, *detector);
          if (!box) {
            ++skipped;
            return;
          }
          auto crop = facecrop::enlarge_and_crop(frame, *box, options.enlarge);
          crop.video_id = rec.video_id;
          crop.frame_index = index;
          const fs::path rel = fs::path(rec.video_id) / facecrop::crop_file_name(rec.video_id, index, "rgb");
          write_png(out_dir / rel, crop.image);
          const Json geometry = facecrop::geometry_to_json(crop);
          write_json(out_dir / rec.video_id / (rec.video_id + "_" + std::to_string(index) + "_geom.json"), geometry);
          per_video[v].push_back({rec.video_id, index, rel.generic_string(), "", geometry});
        });
      } catch (const BackendError&) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      } catch (const Error& e) {
        error = e.what();
        spdlog::warn("crop: {}: {}", rec.video_id, error);
      }
      stats[v] = Json{{"frames", visited}, {"crops", per_video[v].size()}, {"skipped", skipped}};
      if (!error.empty()) stats[v]["error"] = error;
    }
  }
  if (failure) std::rethrow_exception(failure);
  features::FeatureIndex index{out_dir, {}};
  CropStats totals;
  Json stats_json = Json::object();
  for (std::size_t v = 0; v < records.size(); ++v) {
    for (auto& e : per_video[v]) index.entries.push_back(std::move(e));
    totals.skipped_frames += stats[v].value("skipped", 0);
    stats_json[records[v].video_id] = stats[v];
  }
  totals.videos = records.size();
  totals.crops = index.entries.size();
  features::save_feature_index(index);
  write_json(out_dir / "stats.json", stats_json);
  spdlog::info("crop: {} crops from {} videos, {} frames without a face", totals.crops, totals.videos,
               totals.skipped_frames);
  return totals;
}

std::string resolve_backend_spec(const std::string& spec, std::uint64_t seed) {
  if (spec == "synthetic") return "synthetic:" + std::to_string(seed);
  return spec;
}

std::size_t gsd_stage(const fs::path& crops_dir, const std::string& backend_spec, bool raw_sidecar,
                      const fs::path& out_dir) {
  if (backend_spec.empty()) throw ConfigError("gsd: no backend configured");
  const auto crops = features::load_feature_index(crops_dir);
  fs::create_directories(out_dir);
  const fs::path crops_abs = fs::weakly_canonical(crops_dir);
  const fs::path out_abs = fs::weakly_canonical(out_dir);
  std::vector<features::FeatureEntry> entries = crops.entries;
  std::exception_ptr failure;
#pragma omp parallel
  {
    std::unique_ptr<gsd::NormalEstimatorBackend> backend;
    try {
      backend = gsd::make_backend(backend_spec);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
#pragma omp for schedule(dynamic)
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!backend) continue;
      try {
        auto& e = entries[i];
        const fs::path rgb_path = crops_abs / e.rgb;
        const auto map = gsd::estimate_gsd(read_image(rgb_path), *backend);
        const fs::path rel = fs::path(e.video_id) / facecrop::crop_file_name(e.video_id, e.frame_index, "gsd");
        write_png(out_abs / rel, gsd::encode_gsd(map).image);
        if (raw_sidecar) {
          gsd::write_raw_sidecar(out_abs / e.video_id / (e.video_id + "_" + std::to_string(e.frame_index) + "_gsd.raw"), map);
        }
        e.rgb = fs::relative(rgb_path, out_abs).generic_string();
        e.gsd = rel.generic_string();
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
  features::save_feature_index({out_dir, entries});
  spdlog::info("gsd: {} descriptors with backend {}", entries.size(), backend_spec);
  return entries.size();
}

training::Checkpoint train_stage(const training::TrainConfig& config, const fs::path& manifest_path,
                                 const fs::path& split_path, const fs::path& features_dir,
                                 const fs::path& out_dir) {
  config.validate();
  const auto manifest = ingestion::load_manifest(manifest_path);
  const auto split = ingestion::load_split(split_path);
  const auto index = features::load_feature_index(features_dir);
  auto refs_for = [&](ingestion::Split portion) {
    return features::select_samples(index, manifest, split, portion, config.forgery);
  };
  const training::FeatureSource train_src(features_dir, refs_for(ingestion::Split::kTrain), config.input_mode,
                                          config.normalization());
  const training::FeatureSource val_src(features_dir, refs_for(ingestion::Split::kVal), config.input_mode,
                                        config.normalization());
  spdlog::info("train: {} {} on {} train / {} val frames", config.backbone, fusion::to_string(config.input_mode),
               train_src.size(), val_src.size());
  const auto ckpt = training::train(config, train_src, val_src, [](int epoch, double tl, double vl) {
    spdlog::info("epoch {:3d}  train loss {:.5f}  val loss {:.5f}", epoch, tl, vl);
  });
  training::save_checkpoint(out_dir, ckpt);
  return ckpt;
}

evaluation::EvalReport eval_stage(const std::vector<fs::path>& checkpoints, const fs::path& manifest_path,
                                  const fs::path& split_path, const fs::path& features_dir,
                                  const EvalStageOptions& options, std::uint64_t seed, const fs::path& out_dir) {
  std::vector<evaluation::CheckpointRef> refs;
  for (const auto& dir : checkpoints) refs.push_back({dir, training::load_checkpoint(dir)});
  evaluation::EvalOptions opt;
  if (options.selection != "best" && options.selection != "final") {
    throw ConfigError("selection must be \"best\" or \"final\"");
  }
  opt.selection = options.selection == "final" ? training::Selection::kFinal : training::Selection::kBest;
  opt.video_voting = options.video_voting;
  opt.tsne_cap = options.tsne_cap;
  opt.seed = seed;
  const auto report = evaluation::evaluate(refs, features::load_feature_index(features_dir),
                                           ingestion::load_manifest(manifest_path),
                                           ingestion::load_split(split_path), out_dir, opt);
  for (const auto& [f, r] : report.per_forgery) {
    spdlog::info("eval {}: accuracy {:.4f}  AUC {:.4f}  ({} frames)", ingestion::to_string(f), r.accuracy, r.auc,
                 r.confusion.total());
  }
  return report;
}

void viz_stage(const fs::path& features_dir, const fs::path& manifest_path, const std::vector<fs::path>& checkpoints,
               const VizOptions& options, const fs::path& out_dir) {
  const auto index = features::load_feature_index(features_dir);
  const auto manifest = ingestion::load_manifest(manifest_path);
  fs::create_directories(out_dir);
  std::map<ingestion::Label, int> written;
  for (const auto& e : index.entries) {
    if (e.gsd.empty()) continue;
    const auto* rec = manifest.find(e.video_id);
    if (!rec || written[rec->label] >= options.samples) continue;
    const auto map = gsd::decode_gsd(read_image(features_dir / e.gsd));
    const auto vis = gsd::log_visualize(map);
    const std::string stem = e.video_id + "_" + std::to_string(e.frame_index);
    write_png(out_dir / "gsd" / (stem + "_log_gray.png"), vis.gray);
    write_png(out_dir / "gsd" / (stem + "_log_color.png"), vis.color);
    ++written[rec->label];
  }
  for (const auto& dir : checkpoints) {
    const auto ckpt = training::load_checkpoint(dir);
    const std::string name = dir.filename().string();
    evaluation::write_loss_plot(out_dir / ("loss_" + name + ".png"), ckpt.history,
                                ckpt.config.backbone + " " + std::string(fusion::to_string(ckpt.config.input_mode)) +
                                    " " + name);
  }
  spdlog::info("viz: {} real and {} fake GSD visualizations, {} loss plots", written[ingestion::Label::kReal],
               written[ingestion::Label::kFake], checkpoints.size());
}

// ------------------------------------------------------------ orchestration

fs::path WorkLayout::stage_dir(Stage stage) const { return root / std::string(to_string(stage)); }
fs::path WorkLayout::manifest() const { return stage_dir(Stage::kScan) / "manifest.jsonl"; }
fs::path WorkLayout::split() const { return stage_dir(Stage::kSplit) / "split.json"; }
fs::path WorkLayout::crops() const { return stage_dir(Stage::kCrop); }
fs::path WorkLayout::features() const { return stage_dir(Stage::kGsd); }
fs::path WorkLayout::checkpoint(const std::string& forgery) const { return stage_dir(Stage::kTrain) / forgery; }
fs::path WorkLayout::results() const { return stage_dir(Stage::kEval); }
fs::path WorkLayout::viz() const { return stage_dir(Stage::kViz); }

namespace {

constexpr const char* kDoneFile = "stage.done";

// Exclusive ownership of a work dir for one run.
class WorkLock {
 public:
  explicit WorkLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw Error("work dir " + dir.string() + " is locked by another run (remove " + path_.string() +
                        " if stale)");
    std::fprintf(f, "%s\n", "surfake run");
    std::fclose(f);
  }
  ~WorkLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  WorkLock(const WorkLock&) = delete;
  WorkLock& operator=(const WorkLock&) = delete;

 private:
  fs::path path_;
};

Json hash_outputs(const fs::path& dir) {
  Json out = Json::object();
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == kDoneFile) continue;
    // Manifest sidecars carry a creation timestamp that changes on every rerun.
    if (e.path().filename().string().ends_with(".meta.json")) continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = sha256_file(f);
  return out;
}

std::optional<Json> read_done(const fs::path& dir) {
  const fs::path p = dir / kDoneFile;
  if (!fs::exists(p)) return std::nullopt;
  try {
    return read_json(p);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Content hash handed to downstream stages: the stage key plus its outputs.
std::string fingerprint(const Json& done) { return sha256_hex(done.at("key").dump() + done.at("outputs").dump()); }

bool outputs_intact(const fs::path& dir, const Json& done) {
  return hash_outputs(dir) == done.at("outputs");
}

std::string tree_listing_hash(const fs::path& root) {
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    lines.push_back(fs::relative(e.path(), root).generic_string() + "\t" + std::to_string(e.file_size()));
  }
  std::sort(lines.begin(), lines.end());
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  return sha256_hex(joined);
}

std::string file_hash_or_empty(const std::optional<fs::path>& p) {
  return p && fs::is_regular_file(*p) ? sha256_file(*p) : std::string();
}

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::kScan: return {};
    case Stage::kSplit: return {Stage::kScan};
    case Stage::kCrop: return {Stage::kScan};
    case Stage::kGsd: return {Stage::kCrop};
    case Stage::kTrain: return {Stage::kScan, Stage::kSplit, Stage::kGsd};
    case Stage::kEval: return {Stage::kScan, Stage::kSplit, Stage::kGsd, Stage::kTrain};
    case Stage::kViz: return {Stage::kScan, Stage::kGsd};
  }
  return {};
}

void validate_before_run(const RunConfig& c, const std::vector<Stage>& stages, const WorkLayout& work) {
  const std::set<Stage> requested(stages.begin(), stages.end());
  for (Stage s : stages) {
    for (Stage up : upstream_of(s)) {
      if (requested.count(up)) continue;
      if (!read_done(work.stage_dir(up))) {
        throw MissingArtifactError("stage '" + std::string(to_string(s)) + "' needs the output of stage '" +
                                   std::string(to_string(up)) + "', which has not completed in " +
                                   c.work_dir.string());
      }
    }
  }
  if (requested.count(Stage::kScan)) {
    if (c.dataset_root.empty()) throw ConfigError("dataset_root is required for the scan stage");
    if (!fs::is_directory(c.dataset_root)) throw MissingArtifactError("dataset root not found: " + c.dataset_root.string());
    ingestion::resolve_layout(c.scan.layout, c.scan.compression);
  }
  if (requested.count(Stage::kSplit) && c.split.official_dir && !fs::is_directory(*c.split.official_dir)) {
    throw MissingArtifactError("official split dir not found: " + c.split.official_dir->string());
  }
  if (requested.count(Stage::kCrop)) {
    if (c.crop.detector.empty()) throw ConfigError("crop.detector is required for the crop stage");
    const auto f = spec_file(c.crop.detector);
    if (f && !fs::is_regular_file(*f)) throw MissingArtifactError("detector model not found: " + f->string());
  }
  if (requested.count(Stage::kGsd)) {
    if (c.gsd.backend.empty()) throw ConfigError("gsd.backend is required for the gsd stage");
    const auto f = spec_file(c.gsd.backend);
    if (f && !fs::is_regular_file(*f)) throw MissingArtifactError("estimator model not found: " + f->string());
  }
  if (requested.count(Stage::kTrain)) {
    c.train.validate();
    if (c.train.pretrained) training::load_registered_weights(c.train.backbone);
  }
}

}  // namespace

RunResult run_pipeline(const RunConfig& c, const std::vector<Stage>& stages, bool force) {
  const WorkLayout work{c.work_dir};
  validate_before_run(c, stages, work);
  WorkLock lock(c.work_dir);
  RunResult result;
  std::map<Stage, std::string> prints;
  auto upstream_print = [&](Stage s) {
    Json j = Json::object();
    for (Stage up : upstream_of(s)) {
      if (!prints.count(up)) {
        const auto done = read_done(work.stage_dir(up));
        if (!done) throw MissingArtifactError("stage '" + std::string(to_string(up)) + "' has not completed");
        prints[up] = fingerprint(*done);
      }
      j[std::string(to_string(up))] = prints[up];
    }
    return j;
  };
  auto checkpoints = [&] {
    std::vector<fs::path> dirs;
    for (const auto& f : c.forgeries) dirs.push_back(work.checkpoint(f));
    return dirs;
  };

  for (Stage s : stages) {
    Json slice;
    switch (s) {
      case Stage::kScan:
        slice = {{"root", fs::absolute(c.dataset_root).string()}, {"layout", c.scan.layout},
                 {"compression", c.scan.compression}, {"listing", tree_listing_hash(c.dataset_root)}};
        break;
      case Stage::kSplit:
        slice = {{"seed", c.seed},
                 {"official", c.split.official_dir ? tree_listing_hash(*c.split.official_dir) : ""}};
        break;
      case Stage::kCrop:
        slice = {{"detector", c.crop.detector}, {"detector_hash", file_hash_or_empty(spec_file(c.crop.detector))},
                 {"stride", c.crop.frame_stride}, {"enlarge", c.crop.enlarge}, {"max_frames", c.crop.max_frames}};
        break;
      case Stage::kGsd:
        slice = {{"backend", resolve_backend_spec(c.gsd.backend, c.seed)},
                 {"backend_hash", file_hash_or_empty(spec_file(c.gsd.backend))}, {"raw", c.gsd.raw_sidecar}};
        break;
      case Stage::kTrain:
        slice = {{"train", training::to_json(c.train)}, {"forgeries", c.forgeries}};
        break;
      case Stage::kEval:
        slice = {{"selection", c.eval.selection}, {"video_voting", c.eval.video_voting},
                 {"tsne_cap", c.eval.tsne_cap}, {"seed", c.seed}};
        break;
      case Stage::kViz:
        slice = {{"samples", c.viz.samples}, {"forgeries", c.forgeries}};
        break;
    }
    const std::string key = sha256_hex(Json{{"stage", to_string(s)}, {"config", slice}, {"inputs", upstream_print(s)}}.dump());
    const fs::path dir = work.stage_dir(s);
    if (!force) {
      const auto done = read_done(dir);
      if (done && done->value("key", "") == key && outputs_intact(dir, *done)) {
        spdlog::info("stage {}: up to date (cache hit)", to_string(s));
        prints[s] = fingerprint(*done);
        result.cached.push_back(s);
        continue;
      }
    }
    spdlog::info("stage {}: running", to_string(s));
    fs::remove_all(dir);
    fs::create_directories(dir);
    switch (s) {
      case Stage::kScan: scan_stage(c.dataset_root, c.scan, work.manifest()); break;
      case Stage::kSplit: split_stage(work.manifest(), c.seed, c.split, work.split()); break;
      case Stage::kCrop: crop_stage(work.manifest(), c.crop, work.crops()); break;
      case Stage::kGsd:
        gsd_stage(work.crops(), resolve_backend_spec(c.gsd.backend, c.seed), c.gsd.raw_sidecar, work.features());
        break;
      case Stage::kTrain:
        for (const auto& f : c.forgeries) {
          training::TrainConfig tc = c.train;
          tc.forgery = f == "all" ? std::nullopt : std::optional(ingestion::parse_forgery(f));
          train_stage(tc, work.manifest(), work.split(), work.features(), work.checkpoint(f));
        }
        break;
      case Stage::kEval:
        eval_stage(checkpoints(), work.manifest(), work.split(), work.features(), c.eval, c.seed, work.results());
        break;
      case Stage::kViz: {
        std::vector<fs::path> ckpts;
        for (const auto& d : checkpoints()) {
          if (fs::exists(d / "history.json")) ckpts.push_back(d);
        }
        viz_stage(work.features(), work.manifest(), ckpts, c.viz, work.viz());
        break;
      }
    }
    const Json done{{"stage", to_string(s)}, {"key", key}, {"outputs", hash_outputs(dir)}};
    write_json(dir / kDoneFile, done);
    prints[s] = fingerprint(done);
    result.executed.push_back(s);
  }
  return result;
}

}  // namespace surfake::pipeline
