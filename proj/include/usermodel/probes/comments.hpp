#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "usermodel/model/chat.hpp"

namespace usermodel::probes {

inline constexpr std::size_t kDefaultCommentsPerUser = 5;

// Wraps min(k, comments.size()) comments, sampled without replacement and
// kept in their original order, into a single user message:
//
//   Here are some comments I wrote:
//
//   Comment 1: ...
//
//   Comment 2: ...
model::Conversation ingest_comment_corpus(std::span<const std::string> comments,
                                          std::size_t k = kDefaultCommentsPerUser,
                                          std::uint64_t seed = 0);

}  // namespace usermodel::probes
