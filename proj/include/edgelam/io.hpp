#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace edgelam::io {

// Shortest decimal form that round-trips; stable across runs.
std::string format_double(double v);

// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

}  // namespace edgelam::io
