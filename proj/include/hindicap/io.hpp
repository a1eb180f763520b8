#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hindicap::io {

std::string read_file(const std::filesystem::path& path);

/// Reads text lines, stripping a trailing '\r'. A final line without '\n' is kept.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::uint32_t crc32(std::span<const unsigned char> bytes, std::uint32_t seed = 0);
std::uint32_t crc32(std::string_view bytes, std::uint32_t seed = 0);

// Minimal RFC 4180 helpers; fields with separators, quotes or newlines are quoted.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
/// Parses a whole CSV document. Quoted fields may span lines.
std::vector<std::vector<std::string>> csv_parse(std::string_view text);

} // namespace hindicap::io
