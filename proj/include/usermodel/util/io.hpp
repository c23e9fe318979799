#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace usermodel::util {

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// One JSON object per line; blank lines are skipped.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl_line(const nlohmann::json& row);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows);

// Non-empty, non-comment ('#') lines with trailing whitespace removed.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// File under the data directory: $USERMODEL_DATA_DIR when set, otherwise the
// directory configured at build time.
std::filesystem::path data_path(std::string_view relative);

// Compact dump that never throws on invalid UTF-8 (bytes become U+FFFD).
std::string dump_json(const nlohmann::json& value, int indent = -1);

}  // namespace usermodel::util
