#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace surfake {

using Json = nlohmann::json;

Json read_json(const std::filesystem::path& path);
// Writes pretty-printed JSON followed by a newline.
void write_json(const std::filesystem::path& path, const Json& value);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace surfake
