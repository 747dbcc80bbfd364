#include "psearch/eval/metrics.hpp"

#include <algorithm>
#include <spdlog/spdlog.h>

#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::eval {
namespace {

std::vector<std::string> normalize_all(std::span<const std::string> values) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    auto n = text::normalize(v);
    if (!n.empty()) out.push_back(std::move(n));
  }
  return out;
}

bool contains_any(std::string_view normalized_text, const std::vector<std::string>& normalized_needles) {
  return std::any_of(normalized_needles.begin(), normalized_needles.end(),
                     [&](const std::string& n) { return normalized_text.find(n) != std::string_view::npos; });
}

void check_k(std::size_t k) {
  if (k < 1) throw ConfigError("k must be at least 1");
}

// Shared walk for AIC/AEIC: does some top-k passage satisfy `accept`?
template <typename Accept>
bool top_k_has(const std::vector<RankedPassage>& list, const PassageStore& store, std::size_t k, Accept&& accept) {
  const std::size_t n = std::min(k, list.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto* text = store.normalized(list[i].passage_id);
    if (text && accept(*text)) return true;
  }
  return false;
}

}  // namespace

bool contains_answer(std::string_view passage_text, std::span<const std::string> answers) {
  return contains_any(text::normalize(passage_text), normalize_all(answers));
}

HitFraction aic_at_k(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                     std::size_t k) {
  check_k(k);
  HitFraction r;
  for (const auto& ex : examples) {
    ++r.evaluated;
    const auto* list = run.find(ex.id);
    if (!list) {
      ++r.missing_from_run;
      continue;
    }
    const auto answers = normalize_all(ex.answers);
    if (top_k_has(*list, store, k, [&](std::string_view t) { return contains_any(t, answers); })) ++r.hits;
  }
  if (r.missing_from_run) spdlog::warn("{} example(s) missing from the run count as misses", r.missing_from_run);
  r.value = r.evaluated ? static_cast<double>(r.hits) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

HitFraction aeic_at_k(const RunFile& run, const PassageStore& store, std::span<const EvalExample> examples,
                      std::size_t k) {
  check_k(k);
  HitFraction r;
  for (const auto& ex : examples) {
    if (!ex.entity || text::normalize(*ex.entity).empty()) {
      ++r.excluded;
      continue;
    }
    ++r.evaluated;
    const auto* list = run.find(ex.id);
    if (!list) {
      ++r.missing_from_run;
      continue;
    }
    const auto answers = normalize_all(ex.answers);
    const auto entity = text::normalize(*ex.entity);
    if (top_k_has(*list, store, k, [&](std::string_view t) {
          return contains_any(t, answers) && t.find(entity) != std::string_view::npos;
        })) {
      ++r.hits;
    }
  }
  r.value = r.evaluated ? static_cast<double>(r.hits) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

HitFraction entity_in_input_fraction(std::span<const EvalExample> examples) {
  HitFraction r;
  for (const auto& ex : examples) {
    if (!ex.entity || text::normalize(*ex.entity).empty()) {
      ++r.excluded;
      continue;
    }
    ++r.evaluated;
    if (text::normalize(ex.input).find(text::normalize(*ex.entity)) != std::string::npos) ++r.hits;
  }
  r.value = r.evaluated ? static_cast<double>(r.hits) / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

std::size_t median_overlap_based(const RunFile& run, std::span<const EvalExample> examples,
                                 const std::function<bool(std::string_view)>& flagged, std::size_t top_m) {
  std::vector<std::size_t> counts;
  for (const auto& ex : examples) {
    const auto* list = run.find(ex.id);
    if (!list) continue;
    const std::size_t n = std::min(top_m, list->size());
    counts.push_back(static_cast<std::size_t>(
        std::count_if(list->begin(), list->begin() + static_cast<std::ptrdiff_t>(n),
                      [&](const RankedPassage& rp) { return flagged(rp.passage_id); })));
  }
  if (counts.empty()) throw Error("median_overlap_based: no example of the set appears in the run");
  std::sort(counts.begin(), counts.end());
  return counts[(counts.size() - 1) / 2];
}

std::vector<CategoryRow> breakdown_by_category(std::span<const EvalExample> examples,
                                               const std::map<std::string, double>& scores) {
  std::map<std::string, std::pair<std::size_t, double>> groups;
  for (const auto& ex : examples) {
    auto it = scores.find(ex.id);
    if (it == scores.end()) continue;
    auto& g = groups[ex.category.value_or(std::string(kUncategorized))];
    ++g.first;
    g.second += it->second;
  }
  std::vector<CategoryRow> rows;
  for (const auto& [name, g] : groups) rows.push_back({name, g.first, g.second / static_cast<double>(g.first)});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.count > b.count; });
  return rows;
}

FilterResult contamination_filter(const RunFile& run, const PassageStore& store,
                                  std::span<const EvalExample> examples) {
  FilterResult out;
  out.run = run;
  for (const auto& ex : examples) {
    auto it = out.run.lists.find(ex.id);
    if (it == out.run.lists.end()) continue;
    const auto question = text::normalize(ex.input);
    auto& list = it->second;
    std::size_t removed = 0;
    if (!question.empty()) {
      auto keep_end = std::remove_if(list.begin(), list.end(), [&](const RankedPassage& rp) {
        const auto* t = store.normalized(rp.passage_id);
        return t && t->find(question) != std::string::npos;
      });
      removed = static_cast<std::size_t>(list.end() - keep_end);
      list.erase(keep_end, list.end());
    }
    for (std::size_t i = 0; i < list.size(); ++i) list[i].rank = static_cast<std::uint32_t>(i + 1);
    out.removed[ex.id] = removed;
  }
  return out;
}

std::optional<MinedPositive> mine_positive(const RunFile& run, const PassageStore& store,
                                           const EvalExample& example) {
  const auto* list = run.find(example.id);
  if (!list) return std::nullopt;
  const auto answers = normalize_all(example.answers);
  for (const auto& rp : *list) {
    const auto* t = store.normalized(rp.passage_id);
    if (t && contains_any(*t, answers)) return MinedPositive{rp.passage_id, rp.rank};
  }
  return std::nullopt;
}

double mean(const std::map<std::string, double>& scores) {
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [_, v] : scores) sum += v;
  return sum / static_cast<double>(scores.size());
}

OracleResult oracle_combine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  std::vector<std::string> only_a, only_b;
  for (const auto& [k, _] : a) {
    if (!b.contains(k)) only_a.push_back(k);
  }
  for (const auto& [k, _] : b) {
    if (!a.contains(k)) only_b.push_back(k);
  }
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "oracle inputs cover different examples; only in first: [";
    for (std::size_t i = 0; i < only_a.size(); ++i) msg += (i ? ", " : "") + only_a[i];
    msg += "]; only in second: [";
    for (std::size_t i = 0; i < only_b.size(); ++i) msg += (i ? ", " : "") + only_b[i];
    throw ConfigError(msg + "]");
  }
  OracleResult r;
  for (const auto& [k, va] : a) r.per_example[k] = std::max(va, b.at(k));
  r.mean = mean(r.per_example);
  return r;
}

std::map<std::string, double> aic_flags(const RunFile& run, const PassageStore& store,
                                        std::span<const EvalExample> examples, std::size_t k) {
  check_k(k);
  std::map<std::string, double> flags;
  for (const auto& ex : examples) {
    const auto* list = run.find(ex.id);
    const auto answers = normalize_all(ex.answers);
    flags[ex.id] = list && top_k_has(*list, store, k, [&](std::string_view t) { return contains_any(t, answers); })
                       ? 1.0
                       : 0.0;
  }
  return flags;
}

}  // namespace psearch::eval
