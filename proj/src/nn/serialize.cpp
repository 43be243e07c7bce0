#include "surfake/nn/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "surfake/common/error.hpp"

namespace surfake::nn {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', 'B'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw InvalidInputError("truncated tensor archive " + path.string());
  }
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const StateDict& tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

StateDict load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("tensor archive not found: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw InvalidInputError("not a tensor archive: " + path.string());
  }
  StateDict out;
  const std::uint32_t count = get_u32(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get_u32(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw InvalidInputError("truncated tensor archive " + path.string());
    }
    const std::uint32_t rank = get_u32(in, path);
    if (rank > 8) throw InvalidInputError("implausible tensor rank in " + path.string());
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(in, path));
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw InvalidInputError("truncated tensor archive " + path.string());
    }
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace surfake::nn
