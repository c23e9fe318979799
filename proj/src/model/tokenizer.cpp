#include "usermodel/model/tokenizer.hpp"

#include <algorithm>

#include "usermodel/error.hpp"
#include "usermodel/util/io.hpp"

namespace usermodel::model {
namespace {

// Length of the well-formed UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_sequence_length(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k, unsigned char lo = 0x80, unsigned char hi = 0xBF) {
    if (i + k >= s.size()) return false;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return b >= lo && b <= hi;
  };
  if (b0 < 0x80) return 1;
  if (b0 >= 0xC2 && b0 <= 0xDF) return cont(1) ? 2 : 0;
  if (b0 == 0xE0) return cont(1, 0xA0) && cont(2) ? 3 : 0;
  if ((b0 >= 0xE1 && b0 <= 0xEC) || b0 == 0xEE || b0 == 0xEF) {
    return cont(1) && cont(2) ? 3 : 0;
  }
  if (b0 == 0xED) return cont(1, 0x80, 0x9F) && cont(2) ? 3 : 0;
  if (b0 == 0xF0) return cont(1, 0x90) && cont(2) && cont(3) ? 4 : 0;
  if (b0 >= 0xF1 && b0 <= 0xF3) return cont(1) && cont(2) && cont(3) ? 4 : 0;
  if (b0 == 0xF4) return cont(1, 0x80, 0x8F) && cont(2) && cont(3) ? 4 : 0;
  return 0;
}

}  // namespace

std::string sanitize_utf8(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  bool in_bad_run = false;
  while (i < bytes.size()) {
    const std::size_t n = utf8_sequence_length(bytes, i);
    if (n == 0) {
      if (!in_bad_run) out += "\xEF\xBF\xBD";
      in_bad_run = true;
      ++i;
      continue;
    }
    in_bad_run = false;
    out.append(bytes.substr(i, n));
    i += n;
  }
  return out;
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string bytes;
  bytes.reserve(ids.size());
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) bytes.push_back(static_cast<char>(id));
  }
  return sanitize_utf8(bytes);
}

VocabTokenizer::VocabTokenizer(std::vector<std::string> tokens, std::string eos,
                               std::string unk)
    : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<TokenId>(i));
    max_len_ = std::max(max_len_, tokens_[i].size());
  }
  auto find = [&](const std::string& t) {
    auto it = index_.find(t);
    if (it == index_.end()) {
      throw Error(ErrorCode::kInvalidConfig, "vocab tokenizer: missing special token '" + t + "'");
    }
    return it->second;
  };
  eos_ = find(eos);
  unk_ = find(unk);
}

VocabTokenizer VocabTokenizer::load(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(util::read_text(path));
    return VocabTokenizer(j.at("tokens").get<std::vector<std::string>>(),
                          j.at("eos").get<std::string>(), j.at("unk").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedFile, "vocab asset " + path.string() + ": " + e.what());
  }
}

std::vector<TokenId> VocabTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = std::min(max_len_, text.size() - i);
    bool matched = false;
    for (; len > 0; --len) {
      auto it = index_.find(std::string(text.substr(i, len)));
      if (it != index_.end() && it->second != eos_ && it->second != unk_) {
        ids.push_back(it->second);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      ids.push_back(unk_);
      const std::size_t n = utf8_sequence_length(text, i);
      i += n == 0 ? 1 : n;
    }
  }
  return ids;
}

std::string VocabTokenizer::decode(std::span<const TokenId> ids) const {
  std::string bytes;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size() || id == eos_) continue;
    bytes += id == unk_ ? std::string("\xEF\xBF\xBD") : tokens_[static_cast<std::size_t>(id)];
  }
  return sanitize_utf8(bytes);
}

std::unique_ptr<Tokenizer> make_tokenizer(const ModelConfig& config) {
  if (config.tokenizer.kind == TokenizerSpec::Kind::kByte) {
    return std::make_unique<ByteTokenizer>();
  }
  auto tok = std::make_unique<VocabTokenizer>(VocabTokenizer::load(config.tokenizer.path));
  if (tok->vocab_size() != config.vocab_size) {
    throw Error(ErrorCode::kInvalidConfig, "tokenizer asset size does not match vocab_size");
  }
  return tok;
}

}  // namespace usermodel::model
