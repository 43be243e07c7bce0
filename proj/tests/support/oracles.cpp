#include "oracles.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace surfake::test_support {

using ingestion::Label;

double mann_whitney_auc(std::span<const double> scores, std::span<const Label> labels) {
  double credit = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != Label::kFake) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != Label::kReal) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  return credit / pairs;
}

Tensor naive_conv2d(const Tensor& x, const Tensor& w, std::span<const float> bias, int stride, int pad,
                    int groups) {
  const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), c = w.dim(1), k = w.dim(2);
  const int c_all = x.dim(1), o_per_group = o / groups;
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int f = 0; f < o; ++f)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[f];
          const int c0 = (f / o_per_group) * c;
          for (int ch = 0; ch < c; ++ch)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int yy = i * stride - pad + ki, xx = j * stride - pad + kj;
                if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
                acc += static_cast<double>(x[((static_cast<std::size_t>(b) * c_all + c0 + ch) * h + yy) * wd + xx]) *
                       w[((static_cast<std::size_t>(f) * c + ch) * k + ki) * k + kj];
              }
          y[((static_cast<std::size_t>(b) * o + f) * oh + i) * ow + j] = static_cast<float>(acc);
        }
  return y;
}

namespace {

using synthetic::Vec3;

double implicit(const synthetic::Ellipsoid& e, const Vec3& p) {
  return (p - e.center).cwiseQuotient(e.semi_axes).squaredNorm() - 1.0;
}

std::optional<double> march(const synthetic::Ellipsoid& e, const Vec3& dir) {
  constexpr double kStep = 5e-3;
  double t = 0.0;
  double prev = implicit(e, Vec3::Zero());
  for (int i = 0; i < 4000; ++i) {
    const double next_t = t + kStep;
    const double value = implicit(e, next_t * dir);
    if (prev > 0.0 && value <= 0.0) {
      double lo = t, hi = next_t;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (implicit(e, mid * dir) > 0.0 ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
    t = next_t;
    prev = value;
  }
  return std::nullopt;
}

Vec3 parametric_normal(const synthetic::Ellipsoid& e, const Vec3& p) {
  const Vec3 q = (p - e.center).cwiseQuotient(e.semi_axes);
  const double a = std::acos(std::clamp(q.x(), -1.0, 1.0));
  const double b = std::atan2(q.z(), q.y());
  const Vec3& s = e.semi_axes;
  const Vec3 dpa(-s.x() * std::sin(a), s.y() * std::cos(a) * std::cos(b), s.z() * std::cos(a) * std::sin(b));
  const Vec3 dpb(0.0, -s.y() * std::sin(a) * std::sin(b), s.z() * std::sin(a) * std::cos(b));
  Vec3 n = dpa.cross(dpb).normalized();
  if (n.dot(p) > 0.0) n = -n;  // face the camera at the origin
  return n;
}

}  // namespace

AnalyticField analytic_descriptor(const synthetic::Scene& scene, int height, int width) {
  AnalyticField out{FieldF(height, width, 3), std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  const Vec3 up = scene.camera_to_global.transpose() * Vec3::UnitZ();
#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      const Vec3 dir((2.0 * u - 1.0) * scene.tan_half_fov, (2.0 * v - 1.0) * scene.tan_half_fov, 1.0);
      const double denom = scene.background.normal.dot(dir);
      const double t_plane = denom != 0.0 ? scene.background.offset / denom : -1.0;
      std::optional<double> t_head;
      if (scene.head) t_head = march(*scene.head, dir);
      Vec3 n;
      if (t_head && (t_plane <= 0.0 || *t_head < t_plane)) {
        n = parametric_normal(*scene.head, *t_head * dir);
        out.head[static_cast<std::size_t>(y) * width + x] = 1;
      } else {
        n = scene.background.normal.normalized();
        if (n.dot(dir) > 0.0) n = -n;
      }
      const Vec3 cam_up(0.0, -1.0, 0.0);
      Vec3 t = cam_up - n.dot(cam_up) * n;
      if (t.norm() < 1e-9) t = Vec3::UnitX() - n.x() * n;
      t.normalize();
      const Vec3 b = n.cross(t);
      out.field.at(y, x, 0) = static_cast<float>(n.dot(up));
      out.field.at(y, x, 1) = static_cast<float>(t.dot(up));
      out.field.at(y, x, 2) = static_cast<float>(b.dot(up));
    }
  }
  return out;
}

double angle_deg(const float* a, const float* b) {
  const Vec3 va(a[0], a[1], a[2]), vb(b[0], b[1], b[2]);
  const double c = std::clamp(va.normalized().dot(vb.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

FieldComparison compare_to_analytic(const synthetic::Scene& scene, const FieldF& field, int margin) {
  const int h = field.height(), w = field.width();
  const AnalyticField truth = analytic_descriptor(scene, h, w);
  FieldComparison out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t here = truth.head[static_cast<std::size_t>(y) * w + x];
      bool near_edge = false;
      for (int dy = -margin; dy <= margin && !near_edge; ++dy)
        for (int dx = -margin; dx <= margin && !near_edge; ++dx) {
          const int yy = std::clamp(y + dy, 0, h - 1), xx = std::clamp(x + dx, 0, w - 1);
          near_edge = truth.head[static_cast<std::size_t>(yy) * w + xx] != here;
        }
      if (near_edge) {
        ++out.masked;
        continue;
      }
      const float a[3] = {field.at(y, x, 0), field.at(y, x, 1), field.at(y, x, 2)};
      const float b[3] = {truth.field.at(y, x, 0), truth.field.at(y, x, 1), truth.field.at(y, x, 2)};
      out.max_angle_deg = std::max(out.max_angle_deg, angle_deg(a, b));
      ++out.compared;
    }
  }
  return out;
}

}  // namespace surfake::test_support
