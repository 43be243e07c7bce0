#pragma once

#include <filesystem>

#include "surfake/nn/model.hpp"

// Binary tensor archive: "SFTB", u32 entry count, then per entry
// u32 name length, name bytes, u32 rank, rank x u32 dims, float32 data.
// All integers and floats little-endian; entries in name order.
namespace surfake::nn {

void save_tensors(const std::filesystem::path& path, const StateDict& tensors);
StateDict load_tensors(const std::filesystem::path& path);

}  // namespace surfake::nn
