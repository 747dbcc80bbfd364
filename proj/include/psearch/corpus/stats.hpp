#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psearch/corpus/ngram.hpp"

namespace psearch::corpus {

/// A reference corpus (e.g. Wikipedia passages) together with its n-gram set.
struct OverlapReference {
  std::span<const Passage> passages;
  const NgramSet& ngrams;
};

struct OverlapStats {
  std::size_t flagged = 0;             // corpus passages sharing an n-gram with the reference
  double flagged_fraction = 0.0;
  std::size_t reference_passages = 0;
  std::size_t reference_covered = 0;   // reference passages with >= 1 overlapping corpus passage
  double reverse_fraction = 0.0;
  std::vector<bool> flags;             // per corpus passage, input order
};

struct StatsReport {
  std::size_t passage_count = 0;
  std::size_t document_count = 0;
  std::size_t token_count = 0;
  std::map<std::uint32_t, std::size_t> token_histogram;  // token_count -> passages
  std::optional<OverlapStats> overlap;
};

StatsReport corpus_stats(std::span<const Passage> passages,
                         const std::optional<OverlapReference>& reference = std::nullopt);

/// Flags are omitted from the JSON form.
nlohmann::json to_json(const StatsReport& report);

}  // namespace psearch::corpus
