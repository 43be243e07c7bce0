#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surfake/evaluation.hpp"
#include "surfake/training.hpp"

// Stage drivers shared by the CLI subcommands and `run`.
namespace surfake::pipeline {

struct ScanOptions {
  std::string layout = "ffpp";  // or a layout JSON path
  std::string compression = "c23";
};

struct SplitOptions {
  std::optional<std::filesystem::path> official_dir;
};

struct CropOptions {
  std::string detector;  // facecrop::make_detector spec; required
  int frame_stride = 10;
  double enlarge = 1.3;
  int max_frames = 0;  // per video; 0 = no cap
};

struct GsdOptions {
  std::string backend;  // "synthetic" (seeded from the root seed), "synthetic:<n>" or "pretrained:<model>"
  bool raw_sidecar = false;
};

struct EvalStageOptions {
  std::string selection = "best";
  bool video_voting = false;
  std::size_t tsne_cap = 500;
};

struct VizOptions {
  int samples = 8;  // GSD visualizations per class
};

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path work_dir;
  std::uint64_t seed = 0;
  ScanOptions scan;
  SplitOptions split;
  CropOptions crop;
  GsdOptions gsd;
  training::TrainConfig train;
  // One checkpoint per entry; "all" pools every manipulation.
  std::vector<std::string> forgeries;
  EvalStageOptions eval;
  VizOptions viz;
};

// Rejects unknown keys at every level. Relative paths resolve against base.
RunConfig run_config_from_json(const Json& json, const std::filesystem::path& base);
RunConfig load_run_config(const std::filesystem::path& path);

enum class Stage { kScan, kSplit, kCrop, kGsd, kTrain, kEval, kViz };
const std::vector<Stage>& all_stages();
std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
// Comma-separated list, returned in pipeline order.
std::vector<Stage> parse_stages(std::string_view text);

// --- individual stages --------------------------------------------------

void scan_stage(const std::filesystem::path& root, const ScanOptions& options,
                const std::filesystem::path& manifest_out);
void split_stage(const std::filesystem::path& manifest, std::uint64_t seed, const SplitOptions& options,
                 const std::filesystem::path& split_out);

struct CropStats {
  std::size_t videos = 0;
  std::size_t crops = 0;
  std::size_t skipped_frames = 0;  // frames without a detected face
};
CropStats crop_stage(const std::filesystem::path& manifest, const CropOptions& options,
                     const std::filesystem::path& out_dir);

// Resolves "synthetic" without an explicit seed against the root seed.
std::string resolve_backend_spec(const std::string& spec, std::uint64_t seed);
std::size_t gsd_stage(const std::filesystem::path& crops_dir, const std::string& backend_spec,
                      bool raw_sidecar, const std::filesystem::path& out_dir);

training::Checkpoint train_stage(const training::TrainConfig& config,
                                 const std::filesystem::path& manifest,
                                 const std::filesystem::path& split,
                                 const std::filesystem::path& features,
                                 const std::filesystem::path& out_dir);

evaluation::EvalReport eval_stage(const std::vector<std::filesystem::path>& checkpoints,
                                  const std::filesystem::path& manifest,
                                  const std::filesystem::path& split,
                                  const std::filesystem::path& features,
                                  const EvalStageOptions& options, std::uint64_t seed,
                                  const std::filesystem::path& out_dir);

// GSD log visualizations for a few frames per class and, for each checkpoint,
// a loss-curve plot.
void viz_stage(const std::filesystem::path& features, const std::filesystem::path& manifest,
               const std::vector<std::filesystem::path>& checkpoints, const VizOptions& options,
               const std::filesystem::path& out_dir);

// --- orchestration ------------------------------------------------------

struct RunResult {
  std::vector<Stage> executed;
  std::vector<Stage> cached;
};

// Runs the requested stages in pipeline order inside config.work_dir, which
// is locked for the duration. A stage whose stage.done key matches its
// current inputs, and whose recorded outputs are intact, is skipped unless
// force is set.
RunResult run_pipeline(const RunConfig& config, const std::vector<Stage>& stages, bool force);

// Per-stage output locations inside a work dir.
struct WorkLayout {
  std::filesystem::path root;
  std::filesystem::path stage_dir(Stage stage) const;
  std::filesystem::path manifest() const;
  std::filesystem::path split() const;
  std::filesystem::path crops() const;
  std::filesystem::path features() const;
  std::filesystem::path checkpoint(const std::string& forgery) const;
  std::filesystem::path results() const;
  std::filesystem::path viz() const;
};

}  // namespace surfake::pipeline
