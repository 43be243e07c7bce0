#include "surfake/features.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "surfake/common/error.hpp"

namespace surfake::features {

namespace fs = std::filesystem;
using ingestion::Forgery;
using ingestion::Label;

fs::path index_path(const fs::path& dir) { return dir / "index.jsonl"; }

FeatureIndex load_feature_index(const fs::path& dir) {
  const fs::path path = index_path(dir);
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("feature index not found: " + path.string());
  FeatureIndex index{dir, {}};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      FeatureEntry e;
      e.video_id = j.at("video_id").get<std::string>();
      e.frame_index = j.at("frame_index").get<int>();
      e.rgb = j.at("rgb").get<std::string>();
      e.gsd = j.value("gsd", "");
      e.geometry = j.value("geometry", Json());
      index.entries.push_back(std::move(e));
    } catch (const Json::exception& ex) {
      throw InvalidInputError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return index;
}

void save_feature_index(const FeatureIndex& index) {
  auto entries = index.entries;
  std::sort(entries.begin(), entries.end(), [](const FeatureEntry& a, const FeatureEntry& b) {
    return std::tie(a.video_id, a.frame_index) < std::tie(b.video_id, b.frame_index);
  });
  std::string text;
  for (const auto& e : entries) {
    Json j{{"video_id", e.video_id}, {"frame_index", e.frame_index}, {"rgb", e.rgb}};
    if (!e.gsd.empty()) j["gsd"] = e.gsd;
    if (!e.geometry.is_null()) j["geometry"] = e.geometry;
    text += j.dump() + "\n";
  }
  write_text(index_path(index.dir), text);
}

namespace {

bool wanted(const ingestion::VideoRecord& rec, std::optional<Forgery> forgery) {
  return rec.label == Label::kReal || !forgery || rec.forgery == *forgery;
}

}  // namespace

std::vector<SampleRef> select_samples(const FeatureIndex& index,
                                      const ingestion::DatasetManifest& manifest,
                                      const ingestion::SplitManifest& split, ingestion::Split portion,
                                      std::optional<Forgery> forgery) {
  std::vector<SampleRef> out;
  for (const auto& e : index.entries) {
    const auto* rec = manifest.find(e.video_id);
    if (!rec || !wanted(*rec, forgery)) continue;
    const auto assigned = split.find(rec->source_video_id);
    if (!assigned || *assigned != portion) continue;
    out.push_back({e, rec->label, rec->forgery});
  }
  return out;
}

void require_features(const FeatureIndex& index, const ingestion::DatasetManifest& manifest,
                      const ingestion::SplitManifest& split, ingestion::Split portion,
                      std::optional<Forgery> forgery, fusion::InputMode mode) {
  std::set<std::string> usable;
  for (const auto& e : index.entries) {
    const bool need_rgb = mode != fusion::InputMode::kGsd;
    const bool need_gsd = mode != fusion::InputMode::kRgb;
    if (need_rgb && (e.rgb.empty() || !fs::exists(index.dir / e.rgb))) continue;
    if (need_gsd && (e.gsd.empty() || !fs::exists(index.dir / e.gsd))) continue;
    usable.insert(e.video_id);
  }
  std::vector<std::string> missing;
  for (const auto& rec : manifest.records) {
    if (!wanted(rec, forgery)) continue;
    const auto assigned = split.find(rec.source_video_id);
    if (!assigned || *assigned != portion) continue;
    if (!usable.count(rec.video_id)) missing.push_back(rec.video_id);
  }
  if (!missing.empty()) {
    std::string msg = "missing " + std::string(fusion::to_string(mode)) + " features for " +
                      std::to_string(missing.size()) + " " + std::string(ingestion::to_string(portion)) +
                      " video(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw MissingArtifactError(msg);
  }
}

}  // namespace surfake::features
