#include "psearch/corpus/stats.hpp"

#include <nlohmann/json.hpp>
#include <unordered_set>

namespace psearch::corpus {

StatsReport corpus_stats(std::span<const Passage> passages, const std::optional<OverlapReference>& reference) {
  StatsReport report;
  std::unordered_set<std::string_view> docs;
  for (const auto& p : passages) {
    ++report.passage_count;
    report.token_count += p.token_count;
    ++report.token_histogram[p.token_count];
    docs.insert(p.doc_id);
  }
  report.document_count = docs.size();

  if (reference) {
    const auto& params = reference->ngrams.params();
    OverlapStats overlap;
    overlap.flags.reserve(passages.size());
    for (const auto& p : passages) {
      bool flagged = is_overlap_based(p, reference->ngrams, params);
      overlap.flags.push_back(flagged);
      if (flagged) ++overlap.flagged;
    }
    auto corpus_ngrams = build_ngram_set(passages, params, reference->ngrams.mode());
    overlap.reference_passages = reference->passages.size();
    for (const auto& r : reference->passages) {
      if (is_overlap_based(r, corpus_ngrams, params)) ++overlap.reference_covered;
    }
    if (report.passage_count) {
      overlap.flagged_fraction = static_cast<double>(overlap.flagged) / static_cast<double>(report.passage_count);
    }
    if (overlap.reference_passages) {
      overlap.reverse_fraction =
          static_cast<double>(overlap.reference_covered) / static_cast<double>(overlap.reference_passages);
    }
    report.overlap = std::move(overlap);
  }
  return report;
}

nlohmann::json to_json(const StatsReport& report) {
  nlohmann::json histogram = nlohmann::json::object();
  for (auto [tokens, count] : report.token_histogram) histogram[std::to_string(tokens)] = count;
  nlohmann::json j{{"passage_count", report.passage_count},
                   {"document_count", report.document_count},
                   {"token_count", report.token_count},
                   {"token_histogram", histogram}};
  if (report.overlap) {
    const auto& o = *report.overlap;
    j["overlap"] = {{"flagged", o.flagged},
                    {"flagged_fraction", o.flagged_fraction},
                    {"reference_passages", o.reference_passages},
                    {"reference_covered", o.reference_covered},
                    {"reverse_fraction", o.reverse_fraction}};
  }
  return j;
}

}  // namespace psearch::corpus
