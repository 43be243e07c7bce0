#pragma once

#include <cstdint>
#include <vector>

#include "surfake/features.hpp"
#include "surfake/fusion.hpp"
#include "surfake/ingestion.hpp"

// Synthetic stand-in for a FaceForensics-style dataset: every "video" is one
// rendered ellipsoid face, and its fake twin is the same scene with a ripple
// defect in the mouth region.
namespace surfake::test_support {

struct DeskSample {
  Image8 rgb;
  Image8 gsd;  // encoded descriptor at 224 x 224
  ingestion::Label label;
  std::string video_id;
};

struct DeskDataset {
  ingestion::DatasetManifest manifest;
  std::vector<DeskSample> samples;  // manifest order
};

DeskDataset make_desk_dataset(int pairs, std::uint64_t seed);

// Network-ready samples of one split portion.
std::vector<fusion::FusedSample> desk_portion(const DeskDataset& data, const ingestion::SplitManifest& split,
                                              ingestion::Split portion, fusion::InputMode mode,
                                              const fusion::BranchNormalization& norm);

// Writes every sample's crop and encoded GSD as PNGs under dir and returns
// the matching feature index (frame index 0 for every video).
features::FeatureIndex write_desk_features(const DeskDataset& data, const std::filesystem::path& dir);

}  // namespace surfake::test_support
