#include "surfake/common/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "surfake/common/error.hpp"

namespace surfake {

Image8::Image8(int height, int width, int channels, std::uint8_t fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw InvalidInputError("negative image dimension");
  }
  pixels_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

FieldF::FieldF(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) {
    throw InvalidInputError("negative field dimension");
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image8 read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw MissingArtifactError("cannot read image " + path.string());
  }
  if (mat.depth() != CV_8U) {
    throw InvalidInputError("expected an 8-bit image: " + path.string());
  }
  if (mat.channels() == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  } else if (mat.channels() == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
  }
  Image8 image(mat.rows, mat.cols, mat.channels());
  const std::size_t row_bytes = static_cast<std::size_t>(mat.cols) * mat.channels();
  for (int y = 0; y < mat.rows; ++y) {
    std::copy_n(mat.ptr<std::uint8_t>(y), row_bytes, image.pixels().data() + y * row_bytes);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  const int type = CV_8UC(image.channels());
  cv::Mat mat(image.height(), image.width(), type,
              const_cast<std::uint8_t*>(image.pixels().data()));
  cv::Mat out;
  if (image.channels() == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Fixed compression level so identical pixels give identical files.
  if (!cv::imwrite(path.string(), out, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
    throw Error("failed to write " + path.string());
  }
}

}  // namespace surfake
