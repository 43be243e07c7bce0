#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surfake/fusion.hpp"
#include "surfake/ingestion.hpp"

// On-disk feature store shared by the crop, gsd, train and eval stages:
// <dir>/index.jsonl lists one frame per line with image paths relative to dir.
namespace surfake::features {

struct FeatureEntry {
  std::string video_id;
  int frame_index = 0;
  std::string rgb;  // relative path of the 224x224 face crop
  std::string gsd;  // relative path of the encoded GSD image; empty until computed
  Json geometry;    // crop geometry record

  bool operator==(const FeatureEntry&) const = default;
};

struct FeatureIndex {
  std::filesystem::path dir;
  std::vector<FeatureEntry> entries;  // ordered by (video_id, frame_index)
};

std::filesystem::path index_path(const std::filesystem::path& dir);
FeatureIndex load_feature_index(const std::filesystem::path& dir);
void save_feature_index(const FeatureIndex& index);

struct SampleRef {
  FeatureEntry entry;
  ingestion::Label label = ingestion::Label::kReal;
  ingestion::Forgery forgery = ingestion::Forgery::kNone;
};

// Frames of the split portion belonging to real videos or to fakes of
// `forgery` (every manipulation when nullopt).
std::vector<SampleRef> select_samples(const FeatureIndex& index,
                                      const ingestion::DatasetManifest& manifest,
                                      const ingestion::SplitManifest& split, ingestion::Split portion,
                                      std::optional<ingestion::Forgery> forgery);

// Throws MissingArtifactError naming every video of the portion that has no
// usable frame for `mode` (no entry, or a referenced image missing on disk).
void require_features(const FeatureIndex& index, const ingestion::DatasetManifest& manifest,
                      const ingestion::SplitManifest& split, ingestion::Split portion,
                      std::optional<ingestion::Forgery> forgery, fusion::InputMode mode);

}  // namespace surfake::features
