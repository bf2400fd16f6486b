#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dermalab::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Splits text into non-empty lines with trailing '\r' removed.
std::vector<std::string_view> split_lines(std::string_view text);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

/// Shortest text that round-trips the value exactly.
std::string format_double(double value);

/// Fixed number of significant digits, used for human-facing tables.
std::string format_sig(double value, int digits);

}  // namespace dermalab::io
