#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psearch/eval/metrics.hpp"

namespace psearch::eval {

inline const std::vector<std::size_t> kDefaultKs{1, 20, 100};

struct OracleSummary {
  std::size_t examples = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double mean_oracle = 0.0;
};

struct MetricReport {
  std::string dataset;
  std::vector<std::size_t> ks;
  std::vector<HitFraction> aic;   // parallel to ks
  std::vector<HitFraction> aeic;  // parallel to ks
  HitFraction entity_in_input;
  std::optional<std::size_t> contamination_removed;
  std::optional<std::size_t> median_overlap_based;
  std::optional<std::vector<CategoryRow>> categories;
  std::optional<OracleSummary> oracle;
};

/// AIC/AEIC at every k plus entity-in-input. The optional parts are
/// filled in by the caller.
MetricReport evaluate(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                      std::span<const std::size_t> ks = kDefaultKs);

nlohmann::json to_json(const MetricReport& report);

/// Aligned plain-text table, percentages with two decimals:
///
///   metric      k=1     k=20    k=100
///   AIC        25.00   50.00    50.00
///   AEIC       25.00   25.00    25.00
std::string format_table(const MetricReport& report);

}  // namespace psearch::eval
