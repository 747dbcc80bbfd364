#include "psearch/eval/report.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace psearch::eval {
namespace {

nlohmann::json hit_json(const HitFraction& h) {
  return {{"value", h.value},
          {"hits", h.hits},
          {"evaluated", h.evaluated},
          {"missing_from_run", h.missing_from_run},
          {"excluded", h.excluded}};
}

}  // namespace

MetricReport evaluate(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                      std::span<const std::size_t> ks) {
  MetricReport r;
  r.ks.assign(ks.begin(), ks.end());
  for (std::size_t k : ks) {
    r.aic.push_back(aic_at_k(run, store, examples, k));
    r.aeic.push_back(aeic_at_k(run, store, examples, k));
  }
  r.entity_in_input = entity_in_input_fraction(examples);
  return r;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json j;
  if (!report.dataset.empty()) j["dataset"] = report.dataset;
  j["k"] = report.ks;
  nlohmann::json aic = nlohmann::json::object(), aeic = nlohmann::json::object();
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    aic[std::to_string(report.ks[i])] = hit_json(report.aic[i]);
    aeic[std::to_string(report.ks[i])] = hit_json(report.aeic[i]);
  }
  j["AIC"] = aic;
  j["AEIC"] = aeic;
  j["entity_in_input"] = hit_json(report.entity_in_input);
  if (report.contamination_removed) j["contamination_removed"] = *report.contamination_removed;
  if (report.median_overlap_based) j["median_overlap_based"] = *report.median_overlap_based;
  if (report.categories) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : *report.categories) {
      rows.push_back({{"category", row.category}, {"count", row.count}, {"mean", row.mean}});
    }
    j["categories"] = rows;
  }
  if (report.oracle) {
    j["oracle"] = {{"examples", report.oracle->examples},
                   {"mean_a", report.oracle->mean_a},
                   {"mean_b", report.oracle->mean_b},
                   {"mean_oracle", report.oracle->mean_oracle}};
  }
  return j;
}

std::string format_table(const MetricReport& report) {
  std::string out;
  if (!report.dataset.empty()) out += report.dataset + "\n";
  out += fmt::format("{:<8}", "metric");
  for (std::size_t k : report.ks) out += fmt::format("{:>9}", fmt::format("k={}", k));
  out += '\n';
  auto row = [&](const char* name, const std::vector<HitFraction>& values) {
    out += fmt::format("{:<8}", name);
    for (const auto& v : values) out += fmt::format("{:>9.2f}", 100.0 * v.value);
    out += '\n';
  };
  row("AIC", report.aic);
  row("AEIC", report.aeic);
  out += fmt::format("\nentity in input: {:.2f}% ({}/{}, {} without entity)\n", 100.0 * report.entity_in_input.value,
                     report.entity_in_input.hits, report.entity_in_input.evaluated,
                     report.entity_in_input.excluded);
  if (report.contamination_removed) {
    out += fmt::format("contamination filter removed {} passage(s)\n", *report.contamination_removed);
  }
  if (report.median_overlap_based) {
    out += fmt::format("median overlap-based passages in top results: {}\n", *report.median_overlap_based);
  }
  if (report.categories) {
    out += fmt::format("\n{:<32}{:>8}{:>10}\n", "category", "count", "mean");
    for (const auto& c : *report.categories) out += fmt::format("{:<32}{:>8}{:>10.4f}\n", c.category, c.count, c.mean);
  }
  if (report.oracle) {
    out += fmt::format("\noracle over {} examples: a {:.4f}  b {:.4f}  oracle {:.4f}\n", report.oracle->examples,
                       report.oracle->mean_a, report.oracle->mean_b, report.oracle->mean_oracle);
  }
  return out;
}

}  // namespace psearch::eval
