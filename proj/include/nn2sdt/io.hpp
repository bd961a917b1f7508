#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace nn2sdt {

/// Parses a JSON file. Missing files and syntax errors raise ParseError.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace nn2sdt
