#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace surfake {

// Interleaved 8-bit image, row-major, channels in RGB order.
class Image8 {
 public:
  Image8() = default;
  Image8(int height, int width, int channels, std::uint8_t fill = 0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return pixels_.empty(); }

  std::uint8_t& at(int y, int x, int c) { return pixels_[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels_[index(y, x, c)]; }

  std::span<std::uint8_t> pixels() noexcept { return pixels_; }
  std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }

  bool operator==(const Image8&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
};

// Interleaved float field (H x W x C), used for vector fields such as the
// surface descriptor.
class FieldF {
 public:
  FieldF() = default;
  FieldF(int height, int width, int channels, float fill = 0.f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }

  float& at(int y, int x, int c) { return values_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return values_[index(y, x, c)]; }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  bool operator==(const FieldF&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> values_;
};

// PNG/JPEG I/O through OpenCV. Color images are converted to RGB order.
Image8 read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace surfake
