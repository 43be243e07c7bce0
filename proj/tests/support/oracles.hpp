#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "surfake/common/image.hpp"
#include "surfake/common/tensor.hpp"
#include "surfake/ingestion.hpp"
#include "surfake/synthetic_scene.hpp"

// Independent reference computations used as test oracles. Each one takes a
// different route from the library code it checks.
namespace surfake::test_support {

// Fraction of (fake, real) pairs with fake scored higher; ties count 1/2.
double mann_whitney_auc(std::span<const double> scores, std::span<const ingestion::Label> labels);

// Direct NCHW convolution accumulated in double. weight is O x C/groups x K x K.
Tensor naive_conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias, int stride,
                    int pad, int groups = 1);

struct AnalyticField {
  FieldF field;                // H x W x 3 descriptor
  std::vector<std::uint8_t> head;  // 1 where the ray hits the ellipsoid
};

// Ray-marched hit plus the normal of the parametric ellipsoid
// p(a, b) = c + A (cos a, sin a cos b, sin a sin b), evaluated at pixel centres.
AnalyticField analytic_descriptor(const synthetic::Scene& scene, int height, int width);

// Angle in degrees between two 3-vectors.
double angle_deg(const float* a, const float* b);

struct FieldComparison {
  double max_angle_deg = 0.0;
  std::size_t compared = 0;
  std::size_t masked = 0;
};

// Per-pixel angle between `field` and the analytic descriptor of `scene`,
// skipping pixels within `margin` pixels of the head silhouette.
FieldComparison compare_to_analytic(const synthetic::Scene& scene, const FieldF& field, int margin);

}  // namespace surfake::test_support
