#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

#include "surfake/common/image.hpp"
#include "surfake/common/json_io.hpp"
#include "surfake/common/tensor.hpp"
#include "surfake/ingestion.hpp"
#include "surfake/nn/model.hpp"

namespace surfake::fusion {

struct NormalizationSpec {
  std::array<float, 3> mean{0.f, 0.f, 0.f};
  std::array<float, 3> std{1.f, 1.f, 1.f};
  int input_side = 224;

  void validate() const;  // std > 0, input_side > 0
  static NormalizationSpec for_backbone(const std::string& backbone);
};

Json to_json(const NormalizationSpec& spec);
// Fields absent from `json` keep the values of `base`.
NormalizationSpec normalization_from_json(const Json& json, NormalizationSpec base);

enum class InputMode { kRgb, kGsd, kRgbGsd };
std::string_view to_string(InputMode mode);
InputMode parse_input_mode(std::string_view text);
int input_channels(InputMode mode);

struct Provenance {
  std::string video_id;
  int frame_index = 0;
  ingestion::Forgery forgery = ingestion::Forgery::kNone;
};

struct FusedSample {
  Tensor tensor;  // [C, S, S]
  ingestion::Label label = ingestion::Label::kReal;
  Provenance provenance;
};

// p -> (p / 255 - mean_c) / std_c, channel-first [3, S, S].
Tensor normalize_branch(const Image8& image, const NormalizationSpec& spec);

// Channel concatenation, RGB first.
Tensor fuse(const Tensor& rgb, const Tensor& gsd);
std::pair<Tensor, Tensor> split_fused(const Tensor& fused);

// [O, 3, K, K] -> [O, 6, K, K]; channels 3-5 hold the per-tap mean of 0-2.
Tensor adapt_first_layer(const Tensor& pretrained);
// Replaces the classifier's first convolution with its adapted 6-channel form.
void adapt_classifier(nn::Classifier& model);

// Bilinear resize of every channel to the architecture's input side.
FusedSample resize_for_arch(const FusedSample& sample, const std::string& arch);

// 8-bit resize to spec.input_side, then normalization.
Image8 resize_image(const Image8& image, int side);

struct BranchNormalization {
  NormalizationSpec rgb;
  NormalizationSpec gsd;
};

// Assembles the network input for `mode`. Images are resized in the 8-bit
// domain before normalization; unused branches may be empty.
Tensor build_input(const Image8& rgb, const Image8& gsd, InputMode mode,
                   const BranchNormalization& norm);

}  // namespace surfake::fusion
