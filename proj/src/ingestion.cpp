#include "surfake/ingestion.hpp"

#include <spdlog/fmt/chrono.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <opencv2/imgproc.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>
#include <regex>
#include <set>

#include "surfake/common/error.hpp"
#include "surfake/common/rng.hpp"

namespace fs = std::filesystem;

namespace surfake::ingestion {

std::string_view to_string(Label label) { return label == Label::kReal ? "real" : "fake"; }

std::string_view to_string(Forgery forgery) {
  switch (forgery) {
    case Forgery::kNone: return "none";
    case Forgery::kDF: return "DF";
    case Forgery::kF2F: return "F2F";
    case Forgery::kFSH: return "FSH";
    case Forgery::kFS: return "FS";
    case Forgery::kNT: return "NT";
  }
  return "none";
}

Label parse_label(std::string_view text) {
  if (text == "real") return Label::kReal;
  if (text == "fake") return Label::kFake;
  throw InvalidInputError("unknown label '" + std::string(text) + "'");
}

Forgery parse_forgery(std::string_view text) {
  for (Forgery f : {Forgery::kNone, Forgery::kDF, Forgery::kF2F, Forgery::kFSH, Forgery::kFS,
                    Forgery::kNT}) {
    if (text == to_string(f)) return f;
  }
  throw InvalidInputError("unknown forgery '" + std::string(text) + "'");
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw InvalidInputError("unknown split '" + std::string(text) + "'");
}

const VideoRecord* DatasetManifest::find(std::string_view video_id) const {
  for (const auto& r : records)
    if (r.video_id == video_id) return &r;
  return nullptr;
}

std::optional<Split> SplitManifest::find(const std::string& video_id) const {
  auto it = assignment.find(video_id);
  if (it == assignment.end()) return std::nullopt;
  return it->second;
}

Layout Layout::ffpp(std::string compression) {
  Layout l;
  l.name = "ffpp";
  l.compression = compression;
  l.originals = fs::path("original_sequences") / "youtube" / compression / "videos";
  const std::pair<Forgery, const char*> methods[] = {{Forgery::kDF, "Deepfakes"},
                                                     {Forgery::kF2F, "Face2Face"},
                                                     {Forgery::kFSH, "FaceShifter"},
                                                     {Forgery::kFS, "FaceSwap"},
                                                     {Forgery::kNT, "NeuralTextures"}};
  for (const auto& [f, dir] : methods) {
    l.manipulated[f] = fs::path("manipulated_sequences") / dir / compression / "videos";
  }
  l.fake_source_pattern = R"(^([0-9]+)_[0-9]+$)";
  return l;
}

Layout Layout::from_json(const Json& j) {
  Layout l;
  l.name = j.value("name", "custom");
  l.originals = j.at("originals").get<std::string>();
  for (const auto& [k, v] : j.at("manipulated").items()) {
    const Forgery f = parse_forgery(k);
    if (f == Forgery::kNone) throw ConfigError("layout: 'none' is not a manipulation");
    l.manipulated[f] = v.get<std::string>();
  }
  l.fake_source_pattern = j.at("fake_source_pattern").get<std::string>();
  l.compression = j.value("compression", "");
  return l;
}

Layout resolve_layout(std::string_view name_or_path, const std::string& compression) {
  if (name_or_path == "ffpp") return Layout::ffpp(compression);
  const fs::path p{std::string(name_or_path)};
  if (!fs::exists(p)) throw ConfigError("unknown layout '" + std::string(name_or_path) + "'");
  try {
    return Layout::from_json(read_json(p));
  } catch (const Json::exception& e) {
    throw ConfigError("invalid layout file " + p.string() + ": " + e.what());
  }
}

namespace {

bool is_video_entry(const fs::directory_entry& e) {
  static const std::set<std::string> kVideoExt = {".mp4", ".avi", ".mkv", ".mov", ".webm"};
  if (e.is_directory()) return true;  // directory of frame images
  if (!e.is_regular_file()) return false;
  std::string ext = e.path().extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kVideoExt.contains(ext);
}

std::vector<fs::path> list_videos(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (is_video_entry(e)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string now_iso8601() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

}  // namespace

DatasetManifest scan_dataset(const fs::path& root, const Layout& layout) {
  if (!fs::is_directory(root)) {
    throw MissingArtifactError("dataset root does not exist: " + root.string());
  }
  DatasetManifest m;
  m.root = root;
  m.created_at = now_iso8601();
  m.compression = layout.compression;

  std::set<std::string> real_ids;
  for (const fs::path& p : list_videos(root / layout.originals)) {
    VideoRecord r;
    r.video_id = p.stem().string();
    r.path = p;
    r.label = Label::kReal;
    r.forgery = Forgery::kNone;
    r.source_video_id = r.video_id;
    real_ids.insert(r.video_id);
    m.records.push_back(std::move(r));
  }

  const std::regex pattern(layout.fake_source_pattern);
  for (const auto& [forgery, dir] : layout.manipulated) {
    for (const fs::path& p : list_videos(root / dir)) {
      const std::string stem = p.stem().string();
      std::smatch match;
      std::string reason;
      if (!std::regex_match(stem, match, pattern) || match.size() < 2) {
        reason = "file name does not encode a source id";
      } else if (!real_ids.contains(match[1].str())) {
        reason = "source video '" + match[1].str() + "' not found";
      }
      if (!reason.empty()) {
        spdlog::warn("rejecting {}: {}", p.string(), reason);
        m.rejects.push_back({p, reason});
        continue;
      }
      VideoRecord r;
      r.video_id = std::string(to_string(forgery)) + "_" + stem;
      r.path = p;
      r.label = Label::kFake;
      r.forgery = forgery;
      r.source_video_id = match[1].str();
      m.records.push_back(std::move(r));
    }
  }

  std::stable_sort(m.records.begin(), m.records.end(), [](const VideoRecord& a, const VideoRecord& b) {
    if (a.forgery != b.forgery) return a.forgery < b.forgery;
    return a.video_id < b.video_id;
  });
  validate_manifest(m);
  return m;
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string> ids;
  std::set<std::string> reals;
  for (const auto& r : manifest.records) {
    if (!ids.insert(r.video_id).second) {
      throw InvalidInputError("duplicate video_id '" + r.video_id + "'");
    }
    if ((r.label == Label::kReal) != (r.forgery == Forgery::kNone)) {
      throw InvalidInputError("label/forgery mismatch for '" + r.video_id + "'");
    }
    if (r.label == Label::kReal) {
      if (r.source_video_id != r.video_id) {
        throw InvalidInputError("real video '" + r.video_id + "' must be its own source");
      }
      reals.insert(r.video_id);
    }
  }
  for (const auto& r : manifest.records) {
    if (r.label == Label::kFake && !reals.contains(r.source_video_id)) {
      throw InvalidInputError("fake '" + r.video_id + "' references unknown source '" +
                              r.source_video_id + "'");
    }
  }
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::string lines;
  for (const auto& r : manifest.records) {
    const Json j{{"video_id", r.video_id},
                 {"path", r.path.string()},
                 {"label", to_string(r.label)},
                 {"forgery", to_string(r.forgery)},
                 {"source_video_id", r.source_video_id}};
    lines += j.dump() + "\n";
  }
  write_text(path, lines);
  Json rejects = Json::array();
  for (const auto& r : manifest.rejects) rejects.push_back({{"path", r.path.string()}, {"reason", r.reason}});
  write_json(fs::path(path.string() + ".meta.json"),
             Json{{"root", manifest.root.string()},
                  {"created_at", manifest.created_at},
                  {"compression", manifest.compression},
                  {"record_count", manifest.records.size()},
                  {"rejects", rejects}});
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("manifest not found: " + path.string());
  DatasetManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      VideoRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.path = j.at("path").get<std::string>();
      r.label = parse_label(j.at("label").get<std::string>());
      r.forgery = parse_forgery(j.at("forgery").get<std::string>());
      r.source_video_id = j.at("source_video_id").get<std::string>();
      m.records.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw InvalidInputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  const fs::path meta(path.string() + ".meta.json");
  if (fs::exists(meta)) {
    const Json j = read_json(meta);
    m.root = j.value("root", "");
    m.created_at = j.value("created_at", "");
    m.compression = j.value("compression", "");
    for (const auto& r : j.value("rejects", Json::array())) {
      m.rejects.push_back({r.at("path").get<std::string>(), r.at("reason").get<std::string>()});
    }
  }
  validate_manifest(m);
  return m;
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
  const std::size_t train = n * 72 / 100;
  const std::size_t val = n * 14 / 100;
  return {train, val, n - train - val};
}

namespace {

void assign_fakes(const DatasetManifest& manifest, SplitManifest& split) {
  for (const auto& r : manifest.records) {
    if (r.label != Label::kFake) continue;
    auto it = split.assignment.find(r.source_video_id);
    if (it == split.assignment.end()) {
      throw InvalidInputError("manifest integrity violation: source '" + r.source_video_id +
                              "' of fake '" + r.video_id + "' has no split");
    }
    split.assignment[r.video_id] = it->second;
  }
}

}  // namespace

SplitManifest make_splits(const DatasetManifest& manifest, std::uint64_t seed) {
  std::vector<std::string> reals;
  for (const auto& r : manifest.records)
    if (r.label == Label::kReal) reals.push_back(r.video_id);
  if (reals.size() < 3) {
    throw InvalidInputError("make_splits needs at least 3 real videos, got " +
                            std::to_string(reals.size()));
  }
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(reals);
  const auto sizes = split_sizes(reals.size());
  SplitManifest split;
  split.seed = seed;
  for (std::size_t i = 0; i < reals.size(); ++i) {
    const Split s = i < sizes[0] ? Split::kTrain : (i < sizes[0] + sizes[1] ? Split::kVal : Split::kTest);
    split.assignment[reals[i]] = s;
  }
  assign_fakes(manifest, split);
  return split;
}

SplitManifest make_official_splits(const DatasetManifest& manifest, const fs::path& official_dir) {
  SplitManifest split;
  split.source = "official";
  std::map<std::string, Split> official;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const fs::path file = official_dir / (std::string(to_string(s)) + ".json");
    const Json pairs = read_json(file);
    for (const auto& pair : pairs) {
      for (const auto& id : pair) {
        const auto [it, inserted] = official.emplace(id.get<std::string>(), s);
        if (!inserted && it->second != s) {
          throw InvalidInputError("official splits assign '" + it->first + "' twice");
        }
      }
    }
  }
  for (const auto& r : manifest.records) {
    if (r.label != Label::kReal) continue;
    auto it = official.find(r.video_id);
    if (it == official.end()) {
      throw InvalidInputError("real video '" + r.video_id + "' is not covered by the official splits");
    }
    split.assignment[r.video_id] = it->second;
  }
  assign_fakes(manifest, split);
  return split;
}

void save_split(const fs::path& path, const SplitManifest& split) {
  Json assignment = Json::object();
  for (const auto& [id, s] : split.assignment) assignment[id] = to_string(s);
  write_json(path, Json{{"seed", split.seed},
                        {"ratios", split.ratios},
                        {"source", split.source},
                        {"assignment", assignment}});
}

SplitManifest load_split(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("split file not found: " + path.string());
  const Json j = read_json(path);
  SplitManifest s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratios = j.at("ratios").get<std::array<double, 3>>();
    s.source = j.value("source", "seeded");
    for (const auto& [id, v] : j.at("assignment").items()) s.assignment[id] = parse_split(v.get<std::string>());
  } catch (const Json::exception& e) {
    throw InvalidInputError("invalid split file " + path.string() + ": " + e.what());
  }
  return s;
}

int sampled_frame_count(int frame_count, int stride) {
  if (stride < 1) throw InvalidInputError("stride must be >= 1");
  return frame_count < 1 ? 0 : (frame_count - 1) / stride + 1;
}

namespace {

Image8 from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  Image8 img(rgb.rows, rgb.cols, 3);
  for (int y = 0; y < rgb.rows; ++y)
    std::copy_n(rgb.ptr<std::uint8_t>(y), static_cast<std::size_t>(rgb.cols) * 3,
                img.pixels().data() + static_cast<std::size_t>(y) * rgb.cols * 3);
  return img;
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  static const std::set<std::string> kImageExt = {".png", ".jpg", ".jpeg", ".bmp"};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && kImageExt.contains(e.path().extension().string())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

int for_each_sampled_frame(const fs::path& video, int stride,
                           const std::function<void(int, const Image8&)>& visit) {
  if (stride < 1) throw InvalidInputError("stride must be >= 1");
  int visited = 0;
  if (fs::is_directory(video)) {
    const auto files = frame_files(video);
    if (files.empty()) throw InvalidInputError("undecodable video (no frames): " + video.string());
    for (std::size_t i = 0; i < files.size(); i += static_cast<std::size_t>(stride)) {
      cv::Mat m = cv::imread(files[i].string(), cv::IMREAD_COLOR);
      if (m.empty()) {
        if (i == 0) throw InvalidInputError("undecodable video: " + video.string());
        spdlog::warn("{}: frame {} unreadable, truncating", video.string(), i);
        break;
      }
      visit(static_cast<int>(i), from_bgr(m));
      ++visited;
    }
    return visited;
  }

  cv::VideoCapture cap(video.string());
  if (!cap.isOpened()) throw InvalidInputError("undecodable video: " + video.string());
  const double reported = cap.get(cv::CAP_PROP_FRAME_COUNT);
  cv::Mat frame;
  int index = 0;
  for (;; ++index) {
    const bool ok = index % stride == 0 ? cap.read(frame) : cap.grab();
    if (!ok || (index % stride == 0 && frame.empty())) break;
    if (index % stride == 0) {
      visit(index, from_bgr(frame));
      ++visited;
    }
  }
  if (index == 0) throw InvalidInputError("undecodable video: " + video.string());
  if (reported > 0 && index < static_cast<int>(reported) - 1) {
    spdlog::warn("{}: decoding stopped at frame {} of {}, truncating", video.string(), index,
                 static_cast<int>(reported));
  }
  return visited;
}

std::vector<FrameRef> sample_frames(const fs::path& video, int stride, const std::string& video_id) {
  std::vector<FrameRef> frames;
  const std::string id = video_id.empty() ? video.stem().string() : video_id;
  for_each_sampled_frame(video, stride, [&](int index, const Image8& img) {
    frames.push_back({id, index, img});
  });
  return frames;
}

}  // namespace surfake::ingestion
