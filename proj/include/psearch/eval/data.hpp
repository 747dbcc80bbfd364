#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psearch/corpus/document.hpp"

namespace psearch::eval {

struct EvalExample {
  std::string id;
  std::string input;
  std::vector<std::string> answers;  // non-empty
  std::optional<std::string> entity;    // title of the gold evidence page
  std::optional<std::string> category;  // e.g. slot-filling predicate
};

/// JSONL records {id, input, answers: [..], entity?, category?}.
/// Throws ParseError with line numbers on schema violations, including
/// empty answer lists and duplicate ids.
std::vector<EvalExample> read_examples(const std::filesystem::path& path);

struct RankedPassage {
  std::string passage_id;
  double score = 0.0;
  std::uint32_t rank = 0;

  friend bool operator==(const RankedPassage&, const RankedPassage&) = default;
};

/// Ranked retrieval output per query. Lists are ordered by rank with
/// ranks contiguous from 1.
struct RunFile {
  std::map<std::string, std::vector<RankedPassage>> lists;
  std::optional<std::filesystem::path> passage_store;

  const std::vector<RankedPassage>* find(std::string_view query_id) const;
};

/// Tab-separated "query_id passage_id rank score" lines, optionally
/// preceded by "#passages<TAB><path>". Lines of one query must be
/// contiguous and in rank order 1..n.
RunFile read_run(const std::filesystem::path& path);

/// Writes queries in `order` (or map order when empty). Scores use the
/// shortest round-trip representation, so output is byte-stable.
void write_run(std::ostream& out, const RunFile& run, std::span<const std::string> order = {});

/// Passage id -> normalized (case-folded, whitespace-collapsed) title +
/// text, the form every containment check runs against.
class PassageStore {
 public:
  PassageStore() = default;
  void add(const corpus::Passage& passage);
  void add(std::string id, std::string_view raw_text);
  const std::string* normalized(std::string_view passage_id) const;
  std::size_t size() const noexcept { return texts_.size(); }

  static PassageStore load(const std::filesystem::path& passages_jsonl);

 private:
  std::unordered_map<std::string, std::string> texts_;
};

/// Per-example scores, "example_id<TAB>score" per line.
std::map<std::string, double> read_scores(const std::filesystem::path& path);

}  // namespace psearch::eval
