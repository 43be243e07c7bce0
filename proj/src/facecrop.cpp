#include "surfake/facecrop.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/imgproc.hpp>
#include <opencv2/objdetect.hpp>

#include "surfake/common/error.hpp"
#include "surfake/kernels/resize.hpp"

namespace surfake::facecrop {

std::vector<FaceBox> CenterFallbackDetector::detect(const Image8& frame) {
  if (frame.empty()) throw BackendError(id(), "empty frame");
  const double side = 0.6 * std::min(frame.width(), frame.height());
  const double cx = frame.width() / 2.0;
  const double cy = frame.height() / 2.0;
  return {FaceBox{cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2, 1.0}};
}

namespace {

cv::Mat to_gray(const Image8& frame) {
  cv::Mat m(frame.height(), frame.width(), CV_8UC(frame.channels()),
            const_cast<std::uint8_t*>(frame.pixels().data()));
  cv::Mat gray;
  if (frame.channels() == 3) {
    cv::cvtColor(m, gray, cv::COLOR_RGB2GRAY);
  } else {
    gray = m.clone();
  }
  return gray;
}

}  // namespace

struct CascadeDetector::Impl {
  cv::CascadeClassifier cascade;
};

CascadeDetector::CascadeDetector(const std::filesystem::path& cascade_xml)
    : impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(cascade_xml)) {
    throw MissingArtifactError("cascade file not found: " + cascade_xml.string());
  }
  if (!impl_->cascade.load(cascade_xml.string())) {
    throw BackendError("haar", "cannot load cascade " + cascade_xml.string());
  }
}

CascadeDetector::~CascadeDetector() = default;

std::vector<FaceBox> CascadeDetector::detect(const Image8& frame) {
  if (frame.empty()) throw BackendError(id(), "empty frame");
  std::vector<cv::Rect> rects;
  std::vector<int> levels;
  std::vector<double> weights;
  try {
    impl_->cascade.detectMultiScale(to_gray(frame), rects, levels, weights, 1.1, 3, 0,
                                    cv::Size(), cv::Size(), true);
  } catch (const cv::Exception& e) {
    throw BackendError(id(), e.what());
  }
  std::vector<FaceBox> out;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const double w = i < weights.size() ? weights[i] : 0.0;
    const double conf = 1.0 / (1.0 + std::exp(-w));  // stage margin squashed into [0, 1]
    const cv::Rect& r = rects[i];
    out.push_back({double(r.x), double(r.y), double(r.x + r.width), double(r.y + r.height), conf});
  }
  return out;
}

struct YuNetDetector::Impl {
  cv::Ptr<cv::FaceDetectorYN> net;
};

YuNetDetector::YuNetDetector(const std::filesystem::path& model, float score_threshold)
    : impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(model)) {
    throw MissingArtifactError("detector model not found: " + model.string());
  }
  try {
    impl_->net = cv::FaceDetectorYN::create(model.string(), "", cv::Size(320, 320), score_threshold);
  } catch (const cv::Exception& e) {
    throw BackendError("yunet", std::string("cannot load model: ") + e.what());
  }
}

YuNetDetector::~YuNetDetector() = default;

std::vector<FaceBox> YuNetDetector::detect(const Image8& frame) {
  if (frame.empty() || frame.channels() != 3) throw BackendError(id(), "expected an RGB frame");
  cv::Mat rgb(frame.height(), frame.width(), CV_8UC3, const_cast<std::uint8_t*>(frame.pixels().data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  cv::Mat faces;
  try {
    impl_->net->setInputSize(bgr.size());
    impl_->net->detect(bgr, faces);
  } catch (const cv::Exception& e) {
    throw BackendError(id(), e.what());
  }
  std::vector<FaceBox> out;
  for (int i = 0; i < faces.rows; ++i) {
    const float* row = faces.ptr<float>(i);
    // x, y, w, h, 5 landmarks (10 values), score
    out.push_back({row[0], row[1], row[0] + row[2], row[1] + row[3], row[14]});
  }
  return out;
}

std::unique_ptr<FaceDetector> make_detector(std::string_view spec) {
  if (spec == "fallback") return std::make_unique<CenterFallbackDetector>();
  const auto colon = spec.find(':');
  if (colon != std::string_view::npos) {
    const std::string_view kind = spec.substr(0, colon);
    const std::filesystem::path arg(std::string(spec.substr(colon + 1)));
    if (kind == "haar") return std::make_unique<CascadeDetector>(arg);
    if (kind == "yunet") return std::make_unique<YuNetDetector>(arg);
  }
  throw ConfigError("unknown detector '" + std::string(spec) +
                    "' (expected fallback, haar:<xml> or yunet:<onnx>)");
}

std::optional<FaceBox> select_face(const std::vector<FaceBox>& candidates) {
  std::optional<FaceBox> best;
  for (const FaceBox& b : candidates) {
    if (b.width() <= 0 || b.height() <= 0) continue;
    if (!best || b.area() > best->area() ||
        (b.area() == best->area() && b.confidence > best->confidence)) {
      best = b;
    }
  }
  return best;
}

std::optional<FaceBox> detect_face(const Image8& frame, FaceDetector& detector) {
  if (frame.empty()) throw InvalidInputError("detect_face: empty frame");
  return select_face(detector.detect(frame));
}

FaceBox enlarge_box(const FaceBox& box, double factor, int frame_width, int frame_height) {
  const double side = factor * std::max(box.width(), box.height());
  const double cx = (box.x0 + box.x1) / 2.0;
  const double cy = (box.y0 + box.y1) / 2.0;
  FaceBox e{cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0, box.confidence};
  e.x0 = std::clamp(e.x0, 0.0, double(frame_width));
  e.x1 = std::clamp(e.x1, 0.0, double(frame_width));
  e.y0 = std::clamp(e.y0, 0.0, double(frame_height));
  e.y1 = std::clamp(e.y1, 0.0, double(frame_height));
  return e;
}

FaceCrop enlarge_and_crop(const Image8& frame, const FaceBox& box, double factor, int out_size) {
  if (!(factor >= 1.0)) throw InvalidInputError("enlarge_and_crop: factor must be >= 1");
  if (out_size < 1) throw InvalidInputError("enlarge_and_crop: out_size must be >= 1");
  if (frame.empty() || frame.channels() != 3) throw InvalidInputError("enlarge_and_crop: expected an RGB frame");

  FaceCrop crop;
  crop.geometry.original = box;
  crop.geometry.scale_factor = factor;
  crop.geometry.out_size = out_size;
  crop.geometry.frame_width = frame.width();
  crop.geometry.frame_height = frame.height();
  crop.geometry.enlarged = enlarge_box(box, factor, frame.width(), frame.height());
  const FaceBox& e = crop.geometry.enlarged;
  crop.geometry.region_x0 = static_cast<int>(std::lround(e.x0));
  crop.geometry.region_y0 = static_cast<int>(std::lround(e.y0));
  crop.geometry.region_x1 = static_cast<int>(std::lround(e.x1));
  crop.geometry.region_y1 = static_cast<int>(std::lround(e.y1));
  const int rw = crop.geometry.region_x1 - crop.geometry.region_x0;
  const int rh = crop.geometry.region_y1 - crop.geometry.region_y0;
  if (rw <= 0 || rh <= 0) {
    throw InvalidInputError("enlarge_and_crop: clamped region has zero area");
  }

  Image8 region(rh, rw, 3);
  for (int y = 0; y < rh; ++y) {
    const auto* src = &frame.pixels()[(static_cast<std::size_t>(crop.geometry.region_y0 + y) * frame.width() +
                                       crop.geometry.region_x0) * 3];
    std::copy_n(src, static_cast<std::size_t>(rw) * 3, &region.pixels()[static_cast<std::size_t>(y) * rw * 3]);
  }
  crop.image = Image8(out_size, out_size, 3);
  kernels::resize_bilinear({rh, rw, 3, out_size, out_size}, region.pixels(), crop.image.pixels());
  return crop;
}

namespace {

Json box_json(const FaceBox& b) { return Json{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}, {"confidence", b.confidence}}; }

FaceBox box_from(const Json& j) {
  return {j.at("x0").get<double>(), j.at("y0").get<double>(), j.at("x1").get<double>(),
          j.at("y1").get<double>(), j.at("confidence").get<double>()};
}

}  // namespace

Json geometry_to_json(const FaceCrop& crop) {
  const CropGeometry& g = crop.geometry;
  return Json{{"video_id", crop.video_id},
              {"frame_index", crop.frame_index},
              {"box", box_json(g.original)},
              {"enlarged", box_json(g.enlarged)},
              {"scale_factor", g.scale_factor},
              {"region", {g.region_x0, g.region_y0, g.region_x1, g.region_y1}},
              {"out_size", g.out_size},
              {"frame_size", {g.frame_width, g.frame_height}}};
}

CropGeometry geometry_from_json(const Json& j) {
  CropGeometry g;
  g.original = box_from(j.at("box"));
  g.enlarged = box_from(j.at("enlarged"));
  g.scale_factor = j.at("scale_factor").get<double>();
  const auto& r = j.at("region");
  g.region_x0 = r.at(0);
  g.region_y0 = r.at(1);
  g.region_x1 = r.at(2);
  g.region_y1 = r.at(3);
  g.out_size = j.at("out_size");
  g.frame_width = j.at("frame_size").at(0);
  g.frame_height = j.at("frame_size").at(1);
  return g;
}

std::string crop_file_name(const std::string& video_id, int frame_index, std::string_view kind) {
  return video_id + "_" + std::to_string(frame_index) + "_" + std::string(kind) + ".png";
}

}  // namespace surfake::facecrop
