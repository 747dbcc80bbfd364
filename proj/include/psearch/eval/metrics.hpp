#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psearch/eval/data.hpp"

namespace psearch::eval {

/// Case-folded, whitespace-collapsed substring test of any answer.
bool contains_answer(std::string_view passage_text, std::span<const std::string> answers);

struct HitFraction {
  double value = 0.0;               // hits / evaluated
  std::size_t hits = 0;
  std::size_t evaluated = 0;        // examples in the denominator
  std::size_t missing_from_run = 0; // counted as misses
  std::size_t excluded = 0;         // left out of the denominator (no entity)
};

/// Fraction of examples with a gold answer inside some top-k passage.
/// Examples absent from the run count as misses (logged).
HitFraction aic_at_k(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                     std::size_t k);

/// As aic_at_k, but the passage must also contain the main entity.
/// Examples without an entity are excluded and counted in `excluded`.
HitFraction aeic_at_k(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                      std::size_t k);

/// Fraction of examples whose input contains their main entity.
HitFraction entity_in_input_fraction(std::span<const EvalExample> examples);

/// Median, over examples present in the run, of the number of flagged
/// passages among the top `top_m`. Lower median for even counts.
/// Lists shorter than top_m are counted as they are.
std::size_t median_overlap_based(const RunFile& run, std::span<const EvalExample> examples,
                                 const std::function<bool(std::string_view)>& flagged, std::size_t top_m = 100);

inline constexpr std::string_view kUncategorized = "(none)";

struct CategoryRow {
  std::string category;
  std::size_t count = 0;
  double mean = 0.0;
};

/// Mean per-example score per category, rows ordered by count desc then
/// category name. Examples without a score are skipped.
std::vector<CategoryRow> breakdown_by_category(std::span<const EvalExample> examples,
                                               const std::map<std::string, double>& scores);

struct FilterResult {
  RunFile run;
  std::map<std::string, std::size_t> removed;  // per example id
};

/// Drops result passages containing the example's input verbatim
/// (normalized); remaining ranks are compacted to 1..n.
FilterResult contamination_filter(const RunFile& run, const PassageStore& store,
                                  std::span<const EvalExample> examples);

struct MinedPositive {
  std::string passage_id;
  std::uint32_t rank = 0;
};

/// Highest-ranked passage containing a gold answer.
std::optional<MinedPositive> mine_positive(const RunFile& run, const PassageStore& store,
                                           const EvalExample& example);

struct OracleResult {
  std::map<std::string, double> per_example;  // max(a, b)
  double mean = 0.0;
};

/// Best-of-two per example. Throws ConfigError listing the symmetric
/// difference when the key sets differ.
OracleResult oracle_combine(const std::map<std::string, double>& a, const std::map<std::string, double>& b);

double mean(const std::map<std::string, double>& scores);

/// Per-example 0/1 flags: whether the top-k holds an answer-bearing passage.
std::map<std::string, double> aic_flags(const RunFile& run, const PassageStore& store,
                                        std::span<const EvalExample> examples, std::size_t k);

}  // namespace psearch::eval
