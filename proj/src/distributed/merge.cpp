#include "psearch/distributed/merge.hpp"

#include <queue>

namespace psearch::distributed {
namespace {

bool merged_before(const SearchResult& a, const SearchResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.shard_id != b.shard_id) return a.shard_id < b.shard_id;
  return a.passage_id < b.passage_id;
}

}  // namespace

std::vector<SearchResult> merge_topk(std::span<const std::vector<SearchResult>> per_shard, std::size_t k) {
  struct Cursor {
    std::size_t list;
    std::size_t pos;
  };
  auto after = [&](const Cursor& a, const Cursor& b) {
    return merged_before(per_shard[b.list][b.pos], per_shard[a.list][a.pos]);
  };
  std::priority_queue<Cursor, std::vector<Cursor>, decltype(after)> heads(after);
  for (std::size_t i = 0; i < per_shard.size(); ++i) {
    if (!per_shard[i].empty()) heads.push({i, 0});
  }

  std::vector<SearchResult> out;
  while (!heads.empty() && out.size() < k) {
    auto c = heads.top();
    heads.pop();
    out.push_back(per_shard[c.list][c.pos]);
    if (++c.pos < per_shard[c.list].size()) heads.push(c);
  }
  assign_ranks(out);
  return out;
}

}  // namespace psearch::distributed
