#include "usermodel/util/io.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "usermodel/error.hpp"

namespace usermodel::util {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kMalformedFile,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::string dump_json(const nlohmann::json& value, int indent) {
  return value.dump(indent, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string to_jsonl_line(const nlohmann::json& row) { return dump_json(row) + "\n"; }

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) text += to_jsonl_line(r);
  write_text(path, text);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line.substr(first));
  }
  return lines;
}

std::filesystem::path data_path(std::string_view relative) {
  const char* env = std::getenv("USERMODEL_DATA_DIR");
  std::filesystem::path root = (env != nullptr && *env != '\0') ? env : USERMODEL_DATA_DIR;
  return root / std::filesystem::path(relative);
}

}  // namespace usermodel::util
