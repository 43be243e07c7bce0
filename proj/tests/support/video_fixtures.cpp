#include "video_fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "surfake/common/rng.hpp"
#include "surfake/synthetic_scene.hpp"

namespace fs = std::filesystem;

namespace surfake::test_support {

bool write_mjpg_video(const fs::path& path, const std::vector<Image8>& frames, double fps) {
  if (frames.empty()) return false;
  fs::create_directories(path.parent_path());
  const int h = frames[0].height(), w = frames[0].width();
  cv::VideoWriter writer(path.string(), cv::CAP_OPENCV_MJPEG, cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps,
                         cv::Size(w, h));
  if (!writer.isOpened()) return false;
  for (const Image8& f : frames) {
    cv::Mat rgb(h, w, CV_8UC3, const_cast<std::uint8_t*>(f.pixels().data()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    writer.write(bgr);
  }
  return true;
}

std::vector<Image8> decode_all_frames(const fs::path& path) {
  std::vector<Image8> out;
  cv::VideoCapture cap(path.string());
  cv::Mat bgr, rgb;
  while (cap.read(bgr) && !bgr.empty()) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    Image8 img(rgb.rows, rgb.cols, 3);
    std::copy(rgb.datastart, rgb.dataend, img.pixels().begin());
    out.push_back(std::move(img));
  }
  return out;
}

void write_ffpp_tree(const fs::path& root, const TreeOptions& options, std::uint64_t seed) {
  const fs::path originals = root / "original_sequences" / "youtube" / "c23" / "videos";
  const fs::path fakes = root / "manipulated_sequences" / "Deepfakes" / "c23" / "videos";
  fs::create_directories(originals);
  fs::create_directories(fakes);
  for (int i = 0; i < options.reals; ++i) {
    char id[16], fake_id[24];
    std::snprintf(id, sizeof id, "%03d", i);
    std::snprintf(fake_id, sizeof fake_id, "%03d_%03d", i, (i + 1) % options.reals);
    if (!options.write_videos) {
      std::ofstream(originals / (std::string(id) + ".mp4")).put('\0');
      std::ofstream(fakes / (std::string(fake_id) + ".mp4")).put('\0');
      continue;
    }
    Rng rng(derive_seed(seed, std::string("tree-") + id));
    synthetic::Scene scene = synthetic::random_face_scene(rng, false);
    const auto defect = synthetic::random_face_scene(rng, true).defect;
    std::vector<Image8> real_frames, fake_frames;
    for (int f = 0; f < options.frames; ++f) {
      real_frames.push_back(synthetic::render_shading(scene, options.side, options.side));
      synthetic::Scene forged = scene;
      forged.defect = defect;
      fake_frames.push_back(synthetic::render_shading(forged, options.side, options.side));
    }
    write_mjpg_video(originals / (std::string(id) + ".avi"), real_frames);
    write_mjpg_video(fakes / (std::string(fake_id) + ".avi"), fake_frames);
  }
}

fs::path fresh_temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("surfake_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace surfake::test_support
