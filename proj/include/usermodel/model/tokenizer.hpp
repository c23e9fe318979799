#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "usermodel/model/config.hpp"

namespace usermodel::model {

using TokenId = std::int32_t;

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  // Invalid UTF-8 in the decoded byte stream is replaced by U+FFFD.
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual TokenId eos_id() const = 0;
  virtual TokenId unk_id() const = 0;
  virtual std::size_t vocab_size() const = 0;
  virtual std::string kind() const = 0;
};

// 256 byte ids plus end-of-sequence (256). Every byte is representable, so
// the unknown id is never produced.
class ByteTokenizer final : public Tokenizer {
 public:
  static constexpr TokenId kEos = 256;

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  TokenId eos_id() const override { return kEos; }
  TokenId unk_id() const override { return kEos; }
  std::size_t vocab_size() const override { return 257; }
  std::string kind() const override { return "byte"; }
};

// Greedy longest-match over a vocabulary asset. A code point with no
// matching entry maps to the unknown id.
class VocabTokenizer final : public Tokenizer {
 public:
  VocabTokenizer(std::vector<std::string> tokens, std::string eos, std::string unk);
  static VocabTokenizer load(const std::filesystem::path& path);

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  TokenId eos_id() const override { return eos_; }
  TokenId unk_id() const override { return unk_; }
  std::size_t vocab_size() const override { return tokens_.size(); }
  std::string kind() const override { return "vocab"; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_len_ = 1;
  TokenId eos_ = 0;
  TokenId unk_ = 0;
};

std::unique_ptr<Tokenizer> make_tokenizer(const ModelConfig& config);

// Lossy UTF-8 repair: each maximal invalid subsequence becomes U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

}  // namespace usermodel::model
