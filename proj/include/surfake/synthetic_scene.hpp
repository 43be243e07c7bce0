#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "surfake/common/image.hpp"
#include "surfake/common/rng.hpp"
#include "surfake/gsd.hpp"

// Analytic test scenes: an ellipsoid "head" in front of a background plane,
// seen by a pinhole camera at the origin looking down +z (x right, y down).
// Image coordinates are normalized to [0, 1] so a scene renders consistently
// at any resolution.
namespace surfake::synthetic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct SurfaceFrame {
  Vec3 normal;
  Vec3 tangent;
  Vec3 bitangent;
};

struct Ellipsoid {
  Vec3 center{0.0, 0.0, 3.0};
  Vec3 semi_axes{0.8, 1.05, 0.7};
};

// Points p with normal . p == offset; normal points towards the camera.
struct Plane {
  Vec3 normal{0.0, 0.0, -1.0};
  double offset = -5.5;
};

// High-frequency tilt of the head normals inside a Gaussian window, used to
// emulate a localized manipulation artifact.
struct RippleDefect {
  double center_u = 0.5;
  double center_v = 0.7;
  double sigma = 0.07;
  double amplitude = 0.45;
  double wavelength = 0.04;
  double phase = 0.0;
};

struct Scene {
  std::optional<Ellipsoid> head = Ellipsoid{};
  Plane background;
  Mat3 camera_to_global = Mat3::Identity();
  double tan_half_fov = 0.4;
  std::optional<RippleDefect> defect;
  Vec3 light_dir{-0.3, -0.5, -1.0};  // towards the light, camera coordinates
};

// Camera-to-global rotation for a camera with the given roll (about the
// optical axis) and pitch (about the camera x axis). Zero angles give a level
// camera: camera -y maps to global up (+z), camera +z to global +y.
Mat3 camera_to_global(double roll_rad, double pitch_rad);

enum class Surface : std::uint8_t { kBackground = 0, kHead = 1 };

struct RenderedFrames {
  int height = 0;
  int width = 0;
  std::vector<SurfaceFrame> frames;  // row-major
  std::vector<Surface> surface;
};

// Frame convention: normal faces the camera; tangent is the camera up
// direction (-y) projected onto the tangent plane (camera +x when that
// projection vanishes); bitangent = normal x tangent.
RenderedFrames render_surface_frames(const Scene& scene, int height, int width);

// f = (n . u, t . u, b . u) with u the global up axis in camera coordinates.
FieldF global_descriptor(const RenderedFrames& frames, const Mat3& camera_to_global);

// Lambertian rendering of the scene as an RGB image.
Image8 render_shading(const Scene& scene, int height, int width);

// Randomized face-like scene: jittered head, pose, background; with_defect
// adds a ripple in the lower face (mouth) region.
Scene random_face_scene(Rng& rng, bool with_defect);

// Backend that renders a fixed scene, whatever the input pixels.
class SceneBackend : public gsd::NormalEstimatorBackend {
 public:
  explicit SceneBackend(Scene scene) : scene_(std::move(scene)) {}
  std::string id() const override { return "scene"; }
  FieldF estimate(const Image8& rgb) override;

 private:
  Scene scene_;
};

// Test-only stand-in for a learned estimator: each input image selects a
// defect-free random face scene seeded by (seed, image content), so the same
// crop and seed always give the same field.
class SyntheticBackend : public gsd::NormalEstimatorBackend {
 public:
  explicit SyntheticBackend(std::uint64_t seed) : seed_(seed) {}
  std::string id() const override { return "synthetic:" + std::to_string(seed_); }
  FieldF estimate(const Image8& rgb) override;

 private:
  std::uint64_t seed_;
};

}  // namespace surfake::synthetic
