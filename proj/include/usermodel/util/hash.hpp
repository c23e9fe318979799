#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace usermodel::util {

// 64-bit FNV-1a. Used for fingerprints and cache keys, never for security.
class Fnv1a {
 public:
  Fnv1a& update(std::span<const std::byte> bytes);
  Fnv1a& update(std::string_view text);
  template <typename T>
  Fnv1a& update_pod(const T& value) {
    return update(std::as_bytes(std::span<const T>(&value, 1)));
  }
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t value);
std::uint64_t fnv1a(std::string_view text);

// SplitMix64 finalizer; derives independent seeds from (seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace usermodel::util
