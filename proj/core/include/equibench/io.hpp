#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace equibench {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double value);

/// 16 hex digits of FNV-1a over the canonical (sorted-key) JSON dump.
std::string content_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t value);

/// File checksum (FNV-1a, hex).
std::string file_checksum(const std::filesystem::path& path);

/// Writes through a temporary file and renames; creates parent directories.
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace equibench
