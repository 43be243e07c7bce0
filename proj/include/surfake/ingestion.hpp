#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "surfake/common/image.hpp"
#include "surfake/common/json_io.hpp"

namespace surfake::ingestion {

enum class Label { kReal, kFake };
enum class Forgery { kNone, kDF, kF2F, kFSH, kFS, kNT };

inline constexpr std::array<Forgery, 5> kManipulations = {Forgery::kDF, Forgery::kF2F,
                                                          Forgery::kFSH, Forgery::kFS,
                                                          Forgery::kNT};

std::string_view to_string(Label label);
std::string_view to_string(Forgery forgery);
Label parse_label(std::string_view text);
Forgery parse_forgery(std::string_view text);

struct VideoRecord {
  std::string video_id;
  std::filesystem::path path;
  Label label = Label::kReal;
  Forgery forgery = Forgery::kNone;
  std::string source_video_id;  // equals video_id for real videos

  bool operator==(const VideoRecord&) const = default;
};

struct RejectedVideo {
  std::filesystem::path path;
  std::string reason;
};

struct DatasetManifest {
  std::vector<VideoRecord> records;  // ordered by (forgery, video_id)
  std::filesystem::path root;
  std::string created_at;   // ISO-8601 UTC
  std::string compression;  // e.g. "c23"; recorded, not enforced
  std::vector<RejectedVideo> rejects;

  const VideoRecord* find(std::string_view video_id) const;
};

// Directory layout of a dataset: where the originals and each manipulation
// live, and how a fake's file name encodes its source video.
struct Layout {
  std::string name;
  std::filesystem::path originals;
  std::map<Forgery, std::filesystem::path> manipulated;
  std::string fake_source_pattern;  // regex; capture group 1 is the source id
  std::string compression;

  // FaceForensics++: original_sequences/youtube/<c>/videos and
  // manipulated_sequences/<Method>/<c>/videos, fakes named <source>_<target>.
  static Layout ffpp(std::string compression = "c23");
  // {"name", "originals", "manipulated": {"DF": "..."}, "fake_source_pattern", "compression"}
  static Layout from_json(const Json& j);
};

// "ffpp" or a path to a layout JSON file.
Layout resolve_layout(std::string_view name_or_path, const std::string& compression = "c23");

// Throws MissingArtifactError when root does not exist. Fakes whose source
// cannot be resolved are rejected (logged, listed in rejects).
DatasetManifest scan_dataset(const std::filesystem::path& root, const Layout& layout);

// JSON Lines, one record per line; root/created_at/compression/rejects go to
// a "<path>.meta.json" sidecar.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Throws InvalidInputError when ids repeat, labels and forgeries disagree or
// a fake's source is not a real record.
void validate_manifest(const DatasetManifest& manifest);

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct SplitManifest {
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.72, 0.14, 0.14};
  std::map<std::string, Split> assignment;
  std::string source = "seeded";  // or "official"

  std::optional<Split> find(const std::string& video_id) const;
};

// Split sizes over n real videos: floor(0.72 n), floor(0.14 n), remainder.
std::array<std::size_t, 3> split_sizes(std::size_t real_count);

// Real videos (in manifest order) are shuffled with a seeded PRNG and
// partitioned 72:14:14. Fakes inherit their source's split.
SplitManifest make_splits(const DatasetManifest& manifest, std::uint64_t seed);

// FaceForensics++ official split files (train.json, val.json, test.json:
// lists of [id, id] pairs). Fakes inherit their source's split.
SplitManifest make_official_splits(const DatasetManifest& manifest,
                                   const std::filesystem::path& official_dir);

void save_split(const std::filesystem::path& path, const SplitManifest& split);
SplitManifest load_split(const std::filesystem::path& path);

struct FrameRef {
  std::string video_id;
  int frame_index = 0;
  Image8 image;  // RGB
};

// floor((frame_count - 1) / stride) + 1, or 0 for an empty video.
int sampled_frame_count(int frame_count, int stride);

// Decodes a video file (or a directory of frame images) and calls visit for
// frames 0, stride, 2*stride, ... Returns the number of frames visited.
// Throws InvalidInputError when nothing can be decoded; a mid-stream failure
// truncates with a warning.
int for_each_sampled_frame(const std::filesystem::path& video, int stride,
                           const std::function<void(int frame_index, const Image8& frame)>& visit);

std::vector<FrameRef> sample_frames(const std::filesystem::path& video, int stride = 10,
                                    const std::string& video_id = {});

}  // namespace surfake::ingestion
