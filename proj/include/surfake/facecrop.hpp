#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "surfake/common/image.hpp"
#include "surfake/common/json_io.hpp"

namespace surfake::facecrop {

inline constexpr double kEnlargeFactor = 1.3;
inline constexpr int kCropSize = 224;

// Axis-aligned box in pixel-edge coordinates: [x0, x1) x [y0, y1).
struct FaceBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double confidence = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool operator==(const FaceBox&) const = default;
};

struct CropGeometry {
  FaceBox original;
  FaceBox enlarged;     // clamped to frame bounds
  double scale_factor = kEnlargeFactor;
  int region_x0 = 0, region_y0 = 0, region_x1 = 0, region_y1 = 0;  // integer pixels sampled
  int out_size = kCropSize;
  int frame_width = 0;
  int frame_height = 0;
};

struct FaceCrop {
  Image8 image;  // out_size x out_size x 3
  std::string video_id;
  int frame_index = 0;
  CropGeometry geometry;
};

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::string id() const = 0;
  // All candidate faces. Throws BackendError on failure; an empty result
  // means "no face".
  virtual std::vector<FaceBox> detect(const Image8& frame) = 0;
};

// TEST USE ONLY: pretends there is a face in the centre of every frame. The
// box is a centred square with side 60% of the smaller frame dimension.
class CenterFallbackDetector : public FaceDetector {
 public:
  std::string id() const override { return "fallback"; }
  std::vector<FaceBox> detect(const Image8& frame) override;
};

// Haar cascade (OpenCV) loaded from an XML file.
class CascadeDetector : public FaceDetector {
 public:
  explicit CascadeDetector(const std::filesystem::path& cascade_xml);
  ~CascadeDetector() override;
  std::string id() const override { return "haar"; }
  std::vector<FaceBox> detect(const Image8& frame) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// YuNet face detector (OpenCV FaceDetectorYN) loaded from an ONNX model.
class YuNetDetector : public FaceDetector {
 public:
  explicit YuNetDetector(const std::filesystem::path& model, float score_threshold = 0.6f);
  ~YuNetDetector() override;
  std::string id() const override { return "yunet"; }
  std::vector<FaceBox> detect(const Image8& frame) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// "fallback", "haar:<cascade.xml>" or "yunet:<model.onnx>".
std::unique_ptr<FaceDetector> make_detector(std::string_view spec);

// Largest-area candidate (ties: higher confidence, then first found).
std::optional<FaceBox> select_face(const std::vector<FaceBox>& candidates);

std::optional<FaceBox> detect_face(const Image8& frame, FaceDetector& detector);

// Square of side factor * max(w, h) centred on the box, clamped to the
// frame. Does not validate the result.
FaceBox enlarge_box(const FaceBox& box, double factor, int frame_width, int frame_height);

// Enlarge, clamp, then bilinearly resample the clamped region to
// out_size x out_size. Throws InvalidInputError on a degenerate region.
FaceCrop enlarge_and_crop(const Image8& frame, const FaceBox& box,
                          double factor = kEnlargeFactor, int out_size = kCropSize);

Json geometry_to_json(const FaceCrop& crop);
CropGeometry geometry_from_json(const Json& j);

// <video_id>_<frame_index>_rgb.png
std::string crop_file_name(const std::string& video_id, int frame_index, std::string_view kind);

}  // namespace surfake::facecrop
