#pragma once

#include <span>
#include <vector>

#include "psearch/types.hpp"

namespace psearch::distributed {

/// Global top-k over per-shard lists, each already sorted by score desc.
/// Order is (score desc, shard_id asc, passage_id asc); ranks are
/// reassigned 1..n.
std::vector<SearchResult> merge_topk(std::span<const std::vector<SearchResult>> per_shard, std::size_t k);

}  // namespace psearch::distributed
