#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace psearch {

/// One retrieved passage. Ranks are 1-based and contiguous within a list.
struct SearchResult {
  std::string passage_id;
  double score = 0.0;
  std::uint32_t rank = 0;
  std::uint32_t shard_id = 0;

  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

/// Orders by score descending, then passage id ascending.
inline bool score_then_id(const SearchResult& a, const SearchResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.passage_id < b.passage_id;
}

inline void assign_ranks(std::vector<SearchResult>& results) {
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].rank = static_cast<std::uint32_t>(i + 1);
  }
}

}  // namespace psearch
