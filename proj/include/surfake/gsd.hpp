#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "surfake/common/image.hpp"

// Global Surface Descriptor: the per-pixel global up-vector expressed in the
// local surface frame [normal, tangent, bitangent], i.e. the z row of the
// frame in up-right world coordinates. Each pixel is a unit 3-vector.
namespace surfake::gsd {

inline constexpr int kEstimatorHeight = 288;
inline constexpr int kEstimatorWidth = 384;
inline constexpr int kCropSize = 224;

// Per-pixel unit-norm tolerance for backend-produced maps.
inline constexpr double kUnitTolerance = 1e-3;

struct GsdMap {
  FieldF field;  // H x W x 3
  std::string backend_id;

  int height() const { return field.height(); }
  int width() const { return field.width(); }
};

struct EncodedGsd {
  Image8 image;  // H x W x 3, 8-bit
};

// A single-image surface-frame estimator. estimate() receives an RGB image of
// kEstimatorHeight x kEstimatorWidth and returns the descriptor field at the
// same resolution.
class NormalEstimatorBackend {
 public:
  virtual ~NormalEstimatorBackend() = default;
  virtual std::string id() const = 0;
  virtual FieldF estimate(const Image8& rgb) = 0;
};

// Resize to estimator resolution, run the backend, resize the field back to
// the crop's resolution and renormalize every pixel.
GsdMap estimate_gsd(const Image8& crop, NormalEstimatorBackend& backend);

// p = clamp(round_half_away_from_zero((v + 1) * 127.5), 0, 255).
// |v| in (1, 1 + 1e-3] is clamped; anything larger throws InvalidInputError.
std::uint8_t encode_component(double v);
inline double decode_component(std::uint8_t p) { return p / 127.5 - 1.0; }

EncodedGsd encode_gsd(const GsdMap& map);
GsdMap decode_gsd(const Image8& image);

struct LogVisualization {
  Image8 gray;   // single channel, min-max normalized log of encoded channel 0
  Image8 color;  // gray rendered through a fixed color map (RGB)
};

LogVisualization log_visualize(const GsdMap& map, double epsilon = 1e-3);

// Raw float sidecar: "GSD1", u32 H, u32 W, then H*W*3 little-endian float32.
void write_raw_sidecar(const std::filesystem::path& path, const GsdMap& map);
GsdMap read_raw_sidecar(const std::filesystem::path& path);

// Backend spec strings:
//   synthetic:<seed>
//   pretrained:<model.onnx>[?output=<blob>&offset=<channel>&swap_rb=<0|1>]
std::unique_ptr<NormalEstimatorBackend> make_backend(std::string_view spec);

// Adapter around OpenCV's DNN runtime for a serialized estimator network.
// The network's output is N x C x H x W; channels [offset, offset + 3) hold
// the global up-vector field.
class OnnxBackend : public NormalEstimatorBackend {
 public:
  struct Options {
    std::filesystem::path model;
    std::string output_name;  // empty: the network's default output
    int channel_offset = 0;
    bool swap_rb = false;     // feed BGR instead of RGB
  };

  explicit OnnxBackend(Options options);
  ~OnnxBackend() override;

  std::string id() const override;
  FieldF estimate(const Image8& rgb) override;

 private:
  struct Impl;
  Options options_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace surfake::gsd
