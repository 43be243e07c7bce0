#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace surfake {

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(std::string_view text);
std::string sha256_file(const std::filesystem::path& path);

// 64-bit digest prefix, for seeding.
std::uint64_t sha256_u64(std::span<const unsigned char> bytes);

}  // namespace surfake
