#include <opencv2/dnn.hpp>

#include "surfake/common/error.hpp"
#include "surfake/gsd.hpp"
#include "surfake/kernels/resize.hpp"

namespace surfake::gsd {

struct OnnxBackend::Impl {
  cv::dnn::Net net;
};

OnnxBackend::OnnxBackend(Options options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  if (!std::filesystem::exists(options_.model)) {
    throw MissingArtifactError("estimator model not found: " + options_.model.string());
  }
  try {
    impl_->net = cv::dnn::readNet(options_.model.string());
  } catch (const cv::Exception& e) {
    throw BackendError(id(), std::string("failed to load model: ") + e.what());
  }
  if (impl_->net.empty()) throw BackendError(id(), "failed to load model");
}

OnnxBackend::~OnnxBackend() = default;

std::string OnnxBackend::id() const { return "pretrained:" + options_.model.filename().string(); }

FieldF OnnxBackend::estimate(const Image8& rgb) {
  if (rgb.channels() != 3) throw BackendError(id(), "expected an RGB image");
  cv::Mat image(rgb.height(), rgb.width(), CV_8UC3, const_cast<std::uint8_t*>(rgb.pixels().data()));
  cv::Mat blob = cv::dnn::blobFromImage(image, 1.0 / 255.0, cv::Size(rgb.width(), rgb.height()),
                                        cv::Scalar(), options_.swap_rb, false, CV_32F);
  cv::Mat out;
  try {
    impl_->net.setInput(blob);
    out = options_.output_name.empty() ? impl_->net.forward()
                                       : impl_->net.forward(options_.output_name);
  } catch (const cv::Exception& e) {
    throw BackendError(id(), std::string("inference failed: ") + e.what());
  }
  if (out.dims != 4 || out.size[0] != 1) throw BackendError(id(), "expected a 1xCxHxW output");
  const int channels = out.size[1];
  const int oh = out.size[2];
  const int ow = out.size[3];
  if (options_.channel_offset < 0 || options_.channel_offset + 3 > channels) {
    throw BackendError(id(), "channel offset out of range for output with " +
                                 std::to_string(channels) + " channels");
  }
  FieldF field(oh, ow, 3);
  const float* data = out.ptr<float>();
  for (int c = 0; c < 3; ++c) {
    const float* plane = data + static_cast<std::size_t>(options_.channel_offset + c) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) field.at(y, x, c) = plane[y * ow + x];
  }
  if (oh == rgb.height() && ow == rgb.width()) return field;
  FieldF resized(rgb.height(), rgb.width(), 3);
  kernels::resize_bilinear({oh, ow, 3, rgb.height(), rgb.width()}, field.values(), resized.values());
  return resized;
}

}  // namespace surfake::gsd
