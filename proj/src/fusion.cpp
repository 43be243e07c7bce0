#include "surfake/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "surfake/common/error.hpp"
#include "surfake/kernels/resize.hpp"

namespace surfake::fusion {

void NormalizationSpec::validate() const {
  for (float s : std) {
    if (!(s > 0.f) || !std::isfinite(s)) throw ConfigError("normalization std must be positive");
  }
  for (float m : mean) {
    if (!std::isfinite(m)) throw ConfigError("normalization mean must be finite");
  }
  if (input_side <= 0) throw ConfigError("normalization input_side must be positive");
}

NormalizationSpec NormalizationSpec::for_backbone(const std::string& backbone) {
  const auto& b = nn::backbone_spec(backbone);
  return {b.mean, b.std, b.input_side};
}

Json to_json(const NormalizationSpec& spec) {
  return Json{{"mean", spec.mean}, {"std", spec.std}, {"input_side", spec.input_side}};
}

NormalizationSpec normalization_from_json(const Json& json, NormalizationSpec base) {
  if (!json.is_object()) throw ConfigError("normalization must be an object");
  for (const auto& [key, value] : json.items()) {
    try {
      if (key == "mean") {
        base.mean = value.get<std::array<float, 3>>();
      } else if (key == "std") {
        base.std = value.get<std::array<float, 3>>();
      } else if (key == "input_side") {
        base.input_side = value.get<int>();
      } else {
        throw ConfigError("unknown normalization key '" + key + "'");
      }
    } catch (const Json::exception& e) {
      throw ConfigError("normalization." + key + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

std::string_view to_string(InputMode mode) {
  switch (mode) {
    case InputMode::kRgb: return "rgb";
    case InputMode::kGsd: return "gsd";
    case InputMode::kRgbGsd: return "rgb_gsd";
  }
  return "?";
}

InputMode parse_input_mode(std::string_view text) {
  if (text == "rgb") return InputMode::kRgb;
  if (text == "gsd") return InputMode::kGsd;
  if (text == "rgb_gsd") return InputMode::kRgbGsd;
  throw ConfigError("unknown input_mode '" + std::string(text) + "' (rgb, gsd, rgb_gsd)");
}

int input_channels(InputMode mode) { return mode == InputMode::kRgbGsd ? 6 : 3; }

Tensor normalize_branch(const Image8& image, const NormalizationSpec& spec) {
  spec.validate();
  if (image.channels() != 3 || image.height() != spec.input_side || image.width() != spec.input_side) {
    throw InvalidInputError("normalize_branch: expected " + std::to_string(spec.input_side) + "x" +
                            std::to_string(spec.input_side) + "x3 image, got " +
                            std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                            "x" + std::to_string(image.channels()));
  }
  const int side = spec.input_side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  Tensor out({3, side, side});
  const auto px = image.pixels();
  for (int c = 0; c < 3; ++c) {
    const float mean = spec.mean[c];
    const float std = spec.std[c];
    float* dst = out.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = (px[i * 3 + c] / 255.f - mean) / std;
  }
  return out;
}

Tensor fuse(const Tensor& rgb, const Tensor& gsd) {
  if (rgb.rank() != 3 || gsd.rank() != 3 || rgb.dim(0) != 3 || gsd.dim(0) != 3 ||
      rgb.dim(1) != gsd.dim(1) || rgb.dim(2) != gsd.dim(2)) {
    throw InvalidInputError("fuse: expected two [3, H, W] tensors of equal size, got " +
                            shape_string(rgb.shape()) + " and " + shape_string(gsd.shape()));
  }
  Tensor out({6, rgb.dim(1), rgb.dim(2)});
  std::copy(rgb.values().begin(), rgb.values().end(), out.data());
  std::copy(gsd.values().begin(), gsd.values().end(), out.data() + rgb.size());
  return out;
}

std::pair<Tensor, Tensor> split_fused(const Tensor& fused) {
  if (fused.rank() != 3 || fused.dim(0) != 6) {
    throw InvalidInputError("split_fused: expected [6, H, W], got " + shape_string(fused.shape()));
  }
  Tensor rgb({3, fused.dim(1), fused.dim(2)});
  Tensor gsd({3, fused.dim(1), fused.dim(2)});
  std::copy(fused.data(), fused.data() + rgb.size(), rgb.data());
  std::copy(fused.data() + rgb.size(), fused.data() + fused.size(), gsd.data());
  return {std::move(rgb), std::move(gsd)};
}

Tensor adapt_first_layer(const Tensor& pretrained) {
  if (pretrained.rank() != 4 || pretrained.dim(1) != 3) {
    throw InvalidInputError("adapt_first_layer: expected [O, 3, K, K] weights, got " +
                            shape_string(pretrained.shape()));
  }
  const int out = pretrained.dim(0);
  const std::size_t taps = static_cast<std::size_t>(pretrained.dim(2)) * pretrained.dim(3);
  Tensor adapted({out, 6, pretrained.dim(2), pretrained.dim(3)});
  for (int o = 0; o < out; ++o) {
    const float* src = pretrained.data() + static_cast<std::size_t>(o) * 3 * taps;
    float* dst = adapted.data() + static_cast<std::size_t>(o) * 6 * taps;
    std::copy(src, src + 3 * taps, dst);
    for (std::size_t t = 0; t < taps; ++t) {
      const float mean = (src[t] + src[taps + t] + src[2 * taps + t]) / 3.f;
      for (int c = 3; c < 6; ++c) dst[c * taps + t] = mean;
    }
  }
  return adapted;
}

void adapt_classifier(nn::Classifier& model) {
  auto& conv = model.first_conv();
  if (conv.options().groups != 1) throw InvalidInputError("adapt_classifier: grouped first layer");
  conv.replace_weight(adapt_first_layer(conv.weight().value), 6);
}

FusedSample resize_for_arch(const FusedSample& sample, const std::string& arch) {
  const int side = nn::backbone_spec(arch).input_side;
  const Tensor& t = sample.tensor;
  if (t.rank() != 3) throw InvalidInputError("resize_for_arch: expected [C, H, W]");
  if (t.dim(1) == side && t.dim(2) == side) return sample;
  FusedSample out = sample;
  out.tensor = Tensor({t.dim(0), side, side});
  const std::size_t src_plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  const std::size_t dst_plane = static_cast<std::size_t>(side) * side;
  const kernels::ResizeShape shape{t.dim(1), t.dim(2), 1, side, side};
  for (int c = 0; c < t.dim(0); ++c) {
    kernels::resize_bilinear(shape, t.values().subspan(c * src_plane, src_plane),
                             out.tensor.values().subspan(c * dst_plane, dst_plane));
  }
  return out;
}

Image8 resize_image(const Image8& image, int side) {
  if (image.height() == side && image.width() == side) return image;
  Image8 out(side, side, image.channels());
  kernels::resize_bilinear({image.height(), image.width(), image.channels(), side, side},
                           image.pixels(), out.pixels());
  return out;
}

Tensor build_input(const Image8& rgb, const Image8& gsd, InputMode mode,
                   const BranchNormalization& norm) {
  auto branch = [](const Image8& img, const NormalizationSpec& spec, const char* which) {
    if (img.empty()) throw InvalidInputError(std::string("missing ") + which + " image");
    return normalize_branch(resize_image(img, spec.input_side), spec);
  };
  switch (mode) {
    case InputMode::kRgb: return branch(rgb, norm.rgb, "rgb");
    case InputMode::kGsd: return branch(gsd, norm.gsd, "gsd");
    case InputMode::kRgbGsd: return fuse(branch(rgb, norm.rgb, "rgb"), branch(gsd, norm.gsd, "gsd"));
  }
  throw InvalidInputError("unknown input mode");
}

}  // namespace surfake::fusion
