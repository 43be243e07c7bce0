#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "surfake/common/error.hpp"
#include "surfake/pipeline.hpp"

namespace fs = std::filesystem;
using namespace surfake;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  int jobs = 0;
  std::string log_level = "info";
};

template <typename T>
T pick(const CLI::Option* flag, const T& flag_value, const T& fallback) {
  return flag->count() ? flag_value : fallback;
}

fs::path require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw ConfigError(std::string(flag) + " is required");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"surfake: surface-descriptor deepfake detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Configuration file (JSON)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Root seed");
  app.add_flag("--force", g.force, "Rerun stages even when cached");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
  (void)seed_opt;

  // scan
  auto* scan = app.add_subcommand("scan", "Index a dataset tree into a manifest");
  fs::path scan_root, scan_out = "manifest.jsonl";
  std::string layout = "ffpp", compression = "c23";
  auto* scan_root_opt = scan->add_option("--root", scan_root, "Dataset root");
  auto* layout_opt = scan->add_option("--layout", layout, "ffpp or a layout JSON file");
  auto* compression_opt = scan->add_option("--compression", compression, "Compression tier directory");
  scan->add_option("-o,--output", scan_out, "Manifest path");

  // split
  auto* split = app.add_subcommand("split", "Assign real videos to train/val/test");
  fs::path split_manifest, split_out = "split.json", official;
  split->add_option("--manifest", split_manifest, "Manifest path")->required();
  auto* official_opt = split->add_option("--official", official, "Directory with train/val/test.json");
  split->add_option("-o,--output", split_out, "Split path");

  // crop
  auto* crop = app.add_subcommand("crop", "Detect and crop faces from sampled frames");
  fs::path crop_manifest, crop_out = "crops";
  std::string detector;
  int stride = 10, max_frames = 0;
  double enlarge = 1.3;
  crop->add_option("--manifest", crop_manifest, "Manifest path")->required();
  auto* detector_opt = crop->add_option("--detector", detector, "yunet:<model.onnx>, haar:<cascade.xml> or fallback");
  auto* stride_opt = crop->add_option("--stride", stride, "Frame sampling stride")->check(CLI::PositiveNumber);
  auto* enlarge_opt = crop->add_option("--enlarge", enlarge, "Crop enlargement factor");
  auto* max_frames_opt = crop->add_option("--max-frames", max_frames, "Frames per video (0 = all)");
  crop->add_option("-o,--output", crop_out, "Crop directory");

  // gsd
  auto* gsd_cmd = app.add_subcommand("gsd", "Compute encoded surface descriptors for crops");
  fs::path gsd_crops, gsd_out = "features";
  std::string backend;
  bool raw = false;
  gsd_cmd->add_option("--crops", gsd_crops, "Crop directory")->required();
  auto* backend_opt = gsd_cmd->add_option("--backend", backend, "pretrained:<model> or synthetic[:<seed>]");
  auto* raw_opt = gsd_cmd->add_flag("--raw", raw, "Also write float sidecars");
  gsd_cmd->add_option("-o,--output", gsd_out, "Feature directory");

  // train
  auto* train = app.add_subcommand("train", "Train a real/fake classifier");
  fs::path train_manifest, train_split, train_features, train_out = "ckpt";
  train->add_option("--manifest", train_manifest, "Manifest path")->required();
  train->add_option("--split", train_split, "Split path")->required();
  train->add_option("--features", train_features, "Feature directory")->required();
  train->add_option("-o,--output", train_out, "Checkpoint directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the test split");
  std::vector<fs::path> eval_ckpts;
  fs::path eval_manifest, eval_split, eval_features, eval_out = "results";
  bool use_final = false, voting = false;
  std::size_t tsne_cap = 500;
  eval->add_option("--ckpt", eval_ckpts, "Checkpoint directory (repeatable)")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest path")->required();
  eval->add_option("--split", eval_split, "Split path")->required();
  eval->add_option("--features", eval_features, "Feature directory")->required();
  auto* final_opt = eval->add_flag("--final", use_final, "Use final-epoch weights instead of best-val");
  auto* voting_opt = eval->add_flag("--video-voting", voting, "Also report per-video majority voting");
  auto* tsne_opt = eval->add_option("--tsne-cap", tsne_cap, "Samples in the t-SNE plot (0 = none)");
  eval->add_option("-o,--output", eval_out, "Result directory");

  // viz
  auto* viz = app.add_subcommand("viz", "Render GSD visualizations and loss curves");
  fs::path viz_features, viz_manifest, viz_out = "viz";
  std::vector<fs::path> viz_ckpts;
  int samples = 8;
  viz->add_option("--features", viz_features, "Feature directory")->required();
  viz->add_option("--manifest", viz_manifest, "Manifest path")->required();
  viz->add_option("--ckpt", viz_ckpts, "Checkpoint directory (repeatable)");
  auto* samples_opt = viz->add_option("--samples", samples, "Visualizations per class");
  viz->add_option("-o,--output", viz_out, "Output directory");

  // run
  auto* run = app.add_subcommand("run", "Run pipeline stages from a run config");
  std::string stages = "all";
  run->add_option("--stages", stages, "Comma-separated stages (scan,split,crop,gsd,train,eval,viz) or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  if (g.jobs > 0) omp_set_num_threads(g.jobs);

  try {
    // Subcommands other than train and run take stage defaults from a run
    // config when one is given; explicit flags win.
    std::optional<pipeline::RunConfig> rc;
    if (!g.config.empty() && !train->parsed()) rc = pipeline::load_run_config(g.config);
    const std::uint64_t seed = g.seed ? *g.seed : (rc ? rc->seed : 0);

    if (scan->parsed()) {
      const fs::path root = pick<fs::path>(scan_root_opt, scan_root, rc ? rc->dataset_root : fs::path());
      pipeline::ScanOptions opt = rc ? rc->scan : pipeline::ScanOptions{};
      opt.layout = pick(layout_opt, layout, opt.layout);
      opt.compression = pick(compression_opt, compression, opt.compression);
      pipeline::scan_stage(require_path(root, "--root"), opt, scan_out);
    } else if (split->parsed()) {
      pipeline::SplitOptions opt = rc ? rc->split : pipeline::SplitOptions{};
      if (official_opt->count()) opt.official_dir = official;
      pipeline::split_stage(split_manifest, seed, opt, split_out);
    } else if (crop->parsed()) {
      pipeline::CropOptions opt = rc ? rc->crop : pipeline::CropOptions{};
      opt.detector = pick(detector_opt, detector, opt.detector);
      opt.frame_stride = pick(stride_opt, stride, opt.frame_stride);
      opt.enlarge = pick(enlarge_opt, enlarge, opt.enlarge);
      opt.max_frames = pick(max_frames_opt, max_frames, opt.max_frames);
      pipeline::crop_stage(crop_manifest, opt, crop_out);
    } else if (gsd_cmd->parsed()) {
      pipeline::GsdOptions opt = rc ? rc->gsd : pipeline::GsdOptions{};
      opt.backend = pick(backend_opt, backend, opt.backend);
      opt.raw_sidecar = pick(raw_opt, raw, opt.raw_sidecar);
      pipeline::gsd_stage(gsd_crops, pipeline::resolve_backend_spec(opt.backend, seed), opt.raw_sidecar, gsd_out);
    } else if (train->parsed()) {
      training::TrainConfig config;
      if (!g.config.empty()) {
        if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
        config = training::train_config_from_json(read_json(g.config));
      }
      if (g.seed) config.seed = *g.seed;
      pipeline::train_stage(config, train_manifest, train_split, train_features, train_out);
    } else if (eval->parsed()) {
      pipeline::EvalStageOptions opt = rc ? rc->eval : pipeline::EvalStageOptions{};
      if (final_opt->count()) opt.selection = use_final ? "final" : "best";
      opt.video_voting = pick(voting_opt, voting, opt.video_voting);
      opt.tsne_cap = pick(tsne_opt, tsne_cap, opt.tsne_cap);
      pipeline::eval_stage(eval_ckpts, eval_manifest, eval_split, eval_features, opt, seed, eval_out);
    } else if (viz->parsed()) {
      pipeline::VizOptions opt = rc ? rc->viz : pipeline::VizOptions{};
      opt.samples = pick(samples_opt, samples, opt.samples);
      pipeline::viz_stage(viz_features, viz_manifest, viz_ckpts, opt, viz_out);
    } else if (run->parsed()) {
      if (!rc) throw ConfigError("run requires --config");
      if (g.seed) {
        rc->seed = *g.seed;
        rc->train.seed = *g.seed;
      }
      const auto result = pipeline::run_pipeline(*rc, pipeline::parse_stages(stages), g.force);
      spdlog::info("run: {} stage(s) executed, {} cached", result.executed.size(), result.cached.size());
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const MissingArtifactError& e) {
    spdlog::error("missing artifact: {}", e.what());
    return kExitMissing;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
