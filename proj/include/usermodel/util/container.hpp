#pragma once

// Binary container shared by weight files, activation caches and probe sets:
//
//   bytes 0..7   magic "UMCONT01"
//   bytes 8..15  little-endian u64 header length H
//   next H bytes UTF-8 JSON header
//   remainder    little-endian float32 payload
//
// The header carries "payload_floats" so truncated files are detected.

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

namespace usermodel::util {

struct Container {
  nlohmann::json header;
  std::vector<float> payload;
};

void write_container(const std::filesystem::path& path,
                     const nlohmann::json& header,
                     std::span<const float> payload);

Container read_container(const std::filesystem::path& path);

// Serialized bytes, used for byte-stability checks without touching disk.
std::vector<char> encode_container(const nlohmann::json& header,
                                   std::span<const float> payload);
Container decode_container(std::span<const char> bytes);

}  // namespace usermodel::util
