#include "surfake/synthetic_scene.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "surfake/common/error.hpp"
#include "surfake/common/hash.hpp"

namespace surfake::synthetic {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec3 ray_direction(const Scene& scene, double u, double v) {
  return {(u - 0.5) * 2.0 * scene.tan_half_fov, (v - 0.5) * 2.0 * scene.tan_half_fov, 1.0};
}

// Nearest positive hit of the ray t * dir with the ellipsoid, if any.
std::optional<double> hit_ellipsoid(const Ellipsoid& e, const Vec3& dir) {
  const Vec3 q = (-e.center).cwiseQuotient(e.semi_axes);
  const Vec3 d = dir.cwiseQuotient(e.semi_axes);
  const double a = d.squaredNorm();
  const double b = 2.0 * q.dot(d);
  const double c = q.squaredNorm() - 1.0;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  if (t <= 0.0) return std::nullopt;
  return t;
}

SurfaceFrame frame_from_normal(const Vec3& normal) {
  SurfaceFrame f;
  f.normal = normal.normalized();
  const Vec3 up_cam(0.0, -1.0, 0.0);
  Vec3 t = up_cam - up_cam.dot(f.normal) * f.normal;
  if (t.norm() < 1e-9) {
    const Vec3 x_cam(1.0, 0.0, 0.0);
    t = x_cam - x_cam.dot(f.normal) * f.normal;
  }
  f.tangent = t.normalized();
  f.bitangent = f.normal.cross(f.tangent);
  return f;
}

Vec3 apply_defect(const RippleDefect& d, const Vec3& n, double u, double v) {
  const double du = u - d.center_u;
  const double dv = v - d.center_v;
  const double r2 = du * du + dv * dv;
  if (r2 > 9.0 * d.sigma * d.sigma) return n;
  const double window = std::exp(-r2 / (2.0 * d.sigma * d.sigma));
  const double sx = std::sin(kTwoPi * u / d.wavelength + d.phase);
  const double sy = std::cos(kTwoPi * v / d.wavelength + d.phase);
  const Vec3 tilt = d.amplitude * window * Vec3(sx, sy, 0.0);
  return (n + tilt).normalized();
}

}  // namespace

Mat3 camera_to_global(double roll_rad, double pitch_rad) {
  Mat3 level;
  // Columns: images of camera x, y, z in global coordinates.
  level << 1.0, 0.0, 0.0,  //
      0.0, 0.0, 1.0,       //
      0.0, -1.0, 0.0;
  const Mat3 pitch = Eigen::AngleAxisd(pitch_rad, Vec3::UnitX()).toRotationMatrix();
  const Mat3 roll = Eigen::AngleAxisd(roll_rad, Vec3::UnitZ()).toRotationMatrix();
  return level * pitch * roll;
}

RenderedFrames render_surface_frames(const Scene& scene, int height, int width) {
  if (height <= 0 || width <= 0) throw InvalidInputError("render: non-positive resolution");
  RenderedFrames out;
  out.height = height;
  out.width = width;
  out.frames.resize(static_cast<std::size_t>(height) * width);
  out.surface.resize(out.frames.size());

#pragma omp parallel for schedule(static)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      const Vec3 dir = ray_direction(scene, u, v);
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      std::optional<double> t_head;
      if (scene.head) t_head = hit_ellipsoid(*scene.head, dir);
      const double denom = scene.background.normal.dot(dir);
      const double t_plane =
          std::abs(denom) > 1e-12 ? scene.background.offset / denom : -1.0;
      if (t_head && (t_plane <= 0.0 || *t_head < t_plane)) {
        const Ellipsoid& e = *scene.head;
        const Vec3 p = *t_head * dir;
        Vec3 n = (p - e.center).cwiseQuotient(e.semi_axes.cwiseProduct(e.semi_axes)).normalized();
        if (scene.defect) n = apply_defect(*scene.defect, n, u, v);
        out.frames[i] = frame_from_normal(n);
        out.surface[i] = Surface::kHead;
      } else {
        Vec3 n = scene.background.normal.normalized();
        if (n.dot(dir) > 0.0) n = -n;
        out.frames[i] = frame_from_normal(n);
        out.surface[i] = Surface::kBackground;
      }
    }
  }
  return out;
}

FieldF global_descriptor(const RenderedFrames& frames, const Mat3& camera_to_global) {
  const Vec3 up = camera_to_global.transpose() * Vec3::UnitZ();
  FieldF field(frames.height, frames.width, 3);
  for (int y = 0; y < frames.height; ++y) {
    for (int x = 0; x < frames.width; ++x) {
      const SurfaceFrame& f = frames.frames[static_cast<std::size_t>(y) * frames.width + x];
      field.at(y, x, 0) = static_cast<float>(f.normal.dot(up));
      field.at(y, x, 1) = static_cast<float>(f.tangent.dot(up));
      field.at(y, x, 2) = static_cast<float>(f.bitangent.dot(up));
    }
  }
  return field;
}

Image8 render_shading(const Scene& scene, int height, int width) {
  const RenderedFrames frames = render_surface_frames(scene, height, width);
  const Vec3 light = scene.light_dir.normalized();
  Image8 image(height, width, 3);
  const double skin[3] = {224.0, 172.0, 140.0};
  const double wall[3] = {120.0, 130.0, 140.0};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double lambert = std::max(0.0, frames.frames[i].normal.dot(light));
      const double shade = 0.25 + 0.75 * lambert;
      const double* albedo = frames.surface[i] == Surface::kHead ? skin : wall;
      for (int c = 0; c < 3; ++c) {
        image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::round(albedo[c] * shade), 0.0, 255.0));
      }
    }
  }
  return image;
}

Scene random_face_scene(Rng& rng, bool with_defect) {
  Scene s;
  Ellipsoid head;
  head.center = {rng.uniform(-0.06, 0.06), rng.uniform(-0.05, 0.05), rng.uniform(2.9, 3.1)};
  head.semi_axes = {rng.uniform(0.72, 0.86), rng.uniform(0.95, 1.1), rng.uniform(0.6, 0.75)};
  s.head = head;
  const double tilt = rng.uniform(-0.08, 0.08);
  s.background.normal = Vec3(std::sin(tilt), 0.0, -std::cos(tilt));
  s.background.offset = -rng.uniform(5.0, 6.0);
  const double deg = std::numbers::pi / 180.0;
  s.camera_to_global = camera_to_global(rng.uniform(-8.0, 8.0) * deg, rng.uniform(-8.0, 8.0) * deg);
  s.light_dir = {rng.uniform(-0.5, 0.5), rng.uniform(-0.7, -0.2), -1.0};
  if (with_defect) {
    RippleDefect d;
    d.center_u = 0.5 + rng.uniform(-0.04, 0.04);
    d.center_v = 0.7 + rng.uniform(-0.03, 0.03);
    d.sigma = rng.uniform(0.06, 0.08);
    d.amplitude = rng.uniform(0.35, 0.5);
    d.wavelength = rng.uniform(0.035, 0.05);
    d.phase = rng.uniform(0.0, kTwoPi);
    s.defect = d;
  }
  return s;
}

FieldF SceneBackend::estimate(const Image8& rgb) {
  const RenderedFrames frames = render_surface_frames(scene_, rgb.height(), rgb.width());
  return global_descriptor(frames, scene_.camera_to_global);
}

FieldF SyntheticBackend::estimate(const Image8& rgb) {
  const std::uint64_t content = sha256_u64(rgb.pixels());
  Rng rng(seed_ ^ content);
  const Scene scene = random_face_scene(rng, false);
  const RenderedFrames frames = render_surface_frames(scene, rgb.height(), rgb.width());
  return global_descriptor(frames, scene.camera_to_global);
}

}  // namespace surfake::synthetic
