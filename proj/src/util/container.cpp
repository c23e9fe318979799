#include "usermodel/util/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "usermodel/error.hpp"

namespace usermodel::util {
namespace {

constexpr char kMagic[8] = {'U', 'M', 'C', 'O', 'N', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

}  // namespace

std::vector<char> encode_container(const nlohmann::json& header_in,
                                   std::span<const float> payload) {
  nlohmann::json header = header_in;
  header["payload_floats"] = payload.size();
  const std::string text = header.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  std::vector<char> out;
  out.reserve(16 + text.size() + payload.size_bytes());
  out.insert(out.end(), kMagic, kMagic + 8);
  const std::uint64_t len = text.size();
  const auto* len_bytes = reinterpret_cast<const char*>(&len);
  out.insert(out.end(), len_bytes, len_bytes + 8);
  out.insert(out.end(), text.begin(), text.end());
  const auto* data = reinterpret_cast<const char*>(payload.data());
  out.insert(out.end(), data, data + payload.size_bytes());
  return out;
}

Container decode_container(std::span<const char> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorCode::kMalformedFile, "container: bad magic");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  if (len > bytes.size() - 16) {
    throw Error(ErrorCode::kMalformedFile, "container: header length exceeds file");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, std::string("container: bad header: ") + e.what());
  }
  if (!c.header.is_object() || !c.header.contains("payload_floats")) {
    throw Error(ErrorCode::kMalformedFile, "container: header missing payload_floats");
  }
  const auto n = c.header.at("payload_floats").get<std::uint64_t>();
  const std::size_t rest = bytes.size() - 16 - len;
  if (rest != n * sizeof(float)) {
    throw Error(ErrorCode::kMalformedFile, "container: payload size mismatch");
  }
  c.payload.resize(n);
  std::memcpy(c.payload.data(), bytes.data() + 16 + len, rest);
  return c;
}

void write_container(const std::filesystem::path& path,
                     const nlohmann::json& header,
                     std::span<const float> payload) {
  const auto bytes = encode_container(header, payload);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

}  // namespace usermodel::util
