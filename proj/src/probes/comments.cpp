#include "usermodel/probes/comments.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "usermodel/error.hpp"
#include "usermodel/util/random.hpp"

namespace usermodel::probes {

model::Conversation ingest_comment_corpus(std::span<const std::string> comments, std::size_t k,
                                          std::uint64_t seed) {
  if (comments.empty()) throw Error(ErrorCode::kEmptyInput, "comment list is empty");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
  std::vector<std::size_t> idx(comments.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (k < idx.size()) {
    std::mt19937_64 rng(seed);
    util::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
  }
  std::string body = "Here are some comments I wrote:";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    body += "\n\nComment " + std::to_string(i + 1) + ": " + comments[idx[i]];
  }
  model::Conversation c;
  c.messages.push_back({model::Role::kUser, std::move(body)});
  return c;
}

}  // namespace usermodel::probes
