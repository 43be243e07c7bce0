#include "surfake/gsd.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <opencv2/imgproc.hpp>

#include "surfake/common/error.hpp"
#include "surfake/kernels/resize.hpp"
#include "surfake/synthetic_scene.hpp"

namespace surfake::gsd {
namespace {

Image8 resize_image(const Image8& src, int h, int w) {
  Image8 dst(h, w, src.channels());
  kernels::resize_bilinear({src.height(), src.width(), src.channels(), h, w}, src.pixels(),
                           dst.pixels());
  return dst;
}

// Bilinear blending shortens (or, for opposite neighbours, annihilates) unit
// vectors; restore unit length and fall back to the nearest source sample
// where the blend collapsed.
void renormalize(FieldF& field, const FieldF& source) {
  const int h = field.height();
  const int w = field.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v[3];
      double n2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        v[c] = field.at(y, x, c);
        n2 += v[c] * v[c];
      }
      if (n2 < 1e-12) {
        const int sy = std::min(source.height() - 1, (2 * y + 1) * source.height() / (2 * h));
        const int sx = std::min(source.width() - 1, (2 * x + 1) * source.width() / (2 * w));
        n2 = 0.0;
        for (int c = 0; c < 3; ++c) {
          v[c] = source.at(sy, sx, c);
          n2 += v[c] * v[c];
        }
      }
      const double inv = 1.0 / std::sqrt(n2);
      for (int c = 0; c < 3; ++c) field.at(y, x, c) = static_cast<float>(v[c] * inv);
    }
  }
}

}  // namespace

GsdMap estimate_gsd(const Image8& crop, NormalEstimatorBackend& backend) {
  if (crop.empty() || crop.channels() != 3) {
    throw InvalidInputError("estimate_gsd: expected a non-empty 3-channel crop");
  }
  const Image8 input = resize_image(crop, kEstimatorHeight, kEstimatorWidth);
  FieldF raw;
  try {
    raw = backend.estimate(input);
  } catch (const BackendError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError(backend.id(), e.what());
  }
  if (raw.height() != kEstimatorHeight || raw.width() != kEstimatorWidth || raw.channels() != 3) {
    throw BackendError(backend.id(), "backend returned a field of unexpected shape");
  }
  for (float v : raw.values()) {
    if (!std::isfinite(v)) throw BackendError(backend.id(), "non-finite descriptor output");
  }
  GsdMap map;
  map.backend_id = backend.id();
  map.field = FieldF(crop.height(), crop.width(), 3);
  kernels::resize_bilinear({raw.height(), raw.width(), 3, crop.height(), crop.width()},
                           raw.values(), map.field.values());
  renormalize(map.field, raw);
  return map;
}

std::uint8_t encode_component(double v) {
  if (!std::isfinite(v) || std::abs(v) > 1.0 + kUnitTolerance) {
    throw InvalidInputError("encode_gsd: component " + std::to_string(v) +
                            " outside [-1, 1] (non-unit input)");
  }
  const double scaled = std::round((v + 1.0) * 127.5);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

EncodedGsd encode_gsd(const GsdMap& map) {
  if (map.field.channels() != 3) throw InvalidInputError("encode_gsd: expected 3 channels");
  EncodedGsd out{Image8(map.height(), map.width(), 3)};
  std::size_t clamped = 0;
  auto src = map.field.values();
  auto dst = out.image.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (std::abs(src[i]) > 1.0f) ++clamped;
    dst[i] = encode_component(src[i]);
  }
  if (clamped > 0) {
    spdlog::warn("encode_gsd: clamped {} component(s) slightly outside [-1, 1]", clamped);
  }
  return out;
}

GsdMap decode_gsd(const Image8& image) {
  if (image.channels() != 3) {
    throw InvalidInputError("decode_gsd: expected 3 channels, got " +
                            std::to_string(image.channels()));
  }
  GsdMap map;
  map.backend_id = "decoded";
  map.field = FieldF(image.height(), image.width(), 3);
  auto src = image.pixels();
  auto dst = map.field.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(decode_component(src[i]));
  return map;
}

LogVisualization log_visualize(const GsdMap& map, double epsilon) {
  if (map.field.channels() != 3 || map.height() == 0 || map.width() == 0) {
    throw InvalidInputError("log_visualize: expected a non-empty 3-channel map");
  }
  if (!(epsilon > 0.0)) throw InvalidInputError("log_visualize: epsilon must be positive");
  const int h = map.height();
  const int w = map.width();
  std::vector<double> logs(static_cast<std::size_t>(h) * w);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = encode_component(map.field.at(y, x, 0));
      const double l = std::log(u / 255.0 + epsilon);
      logs[static_cast<std::size_t>(y) * w + x] = l;
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  }
  LogVisualization out{Image8(h, w, 1), Image8(h, w, 3)};
  auto gray = out.gray.pixels();
  if (hi - lo <= 0.0) {
    std::fill(gray.begin(), gray.end(), std::uint8_t{128});
  } else {
    for (std::size_t i = 0; i < logs.size(); ++i) {
      gray[i] = static_cast<std::uint8_t>(std::round((logs[i] - lo) / (hi - lo) * 255.0));
    }
  }
  cv::Mat g(h, w, CV_8UC1, gray.data());
  cv::Mat bgr;
  cv::applyColorMap(g, bgr, cv::COLORMAP_VIRIDIS);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  std::memcpy(out.color.pixels().data(), rgb.data, out.color.pixels().size());
  return out;
}

namespace {

template <typename T>
void put_le(std::ofstream& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::array<char, 4> b{static_cast<char>(bits), static_cast<char>(bits >> 8),
                              static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
  out.write(b.data(), 4);
}

template <typename T>
T get_le(std::ifstream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw InvalidInputError("raw sidecar truncated");
  const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_raw_sidecar(const std::filesystem::path& path, const GsdMap& map) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write("GSD1", 4);
  put_le(out, static_cast<std::uint32_t>(map.height()));
  put_le(out, static_cast<std::uint32_t>(map.width()));
  for (float v : map.field.values()) put_le(out, v);
}

GsdMap read_raw_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GSD1", 4) != 0) {
    throw InvalidInputError("not a GSD1 sidecar: " + path.string());
  }
  const auto h = get_le<std::uint32_t>(in);
  const auto w = get_le<std::uint32_t>(in);
  if (h > 1u << 15 || w > 1u << 15) throw InvalidInputError("implausible sidecar dimensions");
  GsdMap map;
  map.backend_id = "raw";
  map.field = FieldF(static_cast<int>(h), static_cast<int>(w), 3);
  for (float& v : map.field.values()) v = get_le<float>(in);
  return map;
}

namespace {

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("invalid " + std::string(what) + ": '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::unique_ptr<NormalEstimatorBackend> make_backend(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("backend must be synthetic:<seed> or pretrained:<model>, got '" +
                      std::string(spec) + "'");
  }
  const std::string_view kind = spec.substr(0, colon);
  std::string_view arg = spec.substr(colon + 1);
  if (kind == "synthetic") {
    return std::make_unique<synthetic::SyntheticBackend>(parse_u64(arg, "synthetic seed"));
  }
  if (kind == "pretrained") {
    OnnxBackend::Options opt;
    const auto q = arg.find('?');
    opt.model = std::string(arg.substr(0, q));
    if (q != std::string_view::npos) {
      std::string_view query = arg.substr(q + 1);
      while (!query.empty()) {
        const auto amp = query.find('&');
        const std::string_view kv = query.substr(0, amp);
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) throw ConfigError("malformed backend option '" + std::string(kv) + "'");
        const std::string_view key = kv.substr(0, eq);
        const std::string_view val = kv.substr(eq + 1);
        if (key == "output") {
          opt.output_name = std::string(val);
        } else if (key == "offset") {
          opt.channel_offset = static_cast<int>(parse_u64(val, "channel offset"));
        } else if (key == "swap_rb") {
          opt.swap_rb = parse_u64(val, "swap_rb") != 0;
        } else {
          throw ConfigError("unknown backend option '" + std::string(key) + "'");
        }
        query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
      }
    }
    return std::make_unique<OnnxBackend>(std::move(opt));
  }
  throw ConfigError("unknown backend kind '" + std::string(kind) + "'");
}

}  // namespace surfake::gsd
