#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psearch/corpus/document.hpp"
#include "psearch/types.hpp"

namespace psearch::sparse {

struct BM25Params {
  double k1 = 0.9;
  double b = 0.4;

  void validate() const;
  friend bool operator==(const BM25Params&, const BM25Params&) = default;
};

/// Case-folded maximal alphanumeric runs; no stemming, no stopwords.
std::vector<std::string> analyze(std::string_view text);

/// Text indexed for a passage: title, one space, body.
std::string indexed_text(const corpus::Passage& passage);

struct Posting {
  std::uint32_t ordinal;
  std::uint32_t tf;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct PostingList {
  std::string term;
  std::vector<Posting> postings;  // ascending ordinal

  std::size_t document_frequency() const noexcept { return postings.size(); }
};

/// Collection statistics used for scoring. A shard scoring on behalf of a
/// sharded collection is handed the global values so its scores equal
/// those of a single index over the whole collection.
struct CollectionStats {
  std::uint64_t passage_count = 0;
  std::uint64_t total_length = 0;
  std::unordered_map<std::string, std::uint64_t> document_frequency;

  double avgdl() const noexcept {
    return passage_count ? static_cast<double>(total_length) / static_cast<double>(passage_count) : 0.0;
  }
  /// Sums per-shard statistics.
  void merge(const CollectionStats& other);
};

double idf(std::uint64_t passage_count, std::uint64_t df) noexcept;

/// Inverted index with BM25 ranking. Single writer during build; const
/// methods are safe to call concurrently on a finished index.
class SparseIndex {
 public:
  explicit SparseIndex(BM25Params params = {});

  /// Throws BuildError on a duplicate passage id; the index is unchanged.
  void add(const corpus::Passage& passage);
  void add(std::string_view passage_id, std::string_view text);

  std::size_t size() const noexcept { return ids_.size(); }
  std::uint64_t total_length() const noexcept { return total_length_; }
  double avgdl() const noexcept;
  const BM25Params& params() const noexcept { return params_; }
  std::size_t vocabulary_size() const noexcept { return postings_.size(); }

  const PostingList* postings(std::string_view term) const;
  const std::string& passage_id(std::uint32_t ordinal) const { return ids_.at(ordinal); }
  std::optional<std::uint32_t> ordinal(std::string_view passage_id) const;
  std::uint32_t length(std::uint32_t ordinal) const { return lengths_.at(ordinal); }

  /// Local statistics restricted to `terms` (document frequency per term).
  CollectionStats stats_for(std::span<const std::string> terms) const;

  /// BM25 score of one passage. Repeated query terms count once per
  /// occurrence; terms missing from the passage contribute zero.
  double score(std::span<const std::string> query_terms, std::uint32_t ordinal,
               const CollectionStats* global = nullptr) const;

  /// Top-k passages matching at least one query term, ordered by
  /// (score desc, passage_id asc), ranks 1..n.
  std::vector<SearchResult> search(std::span<const std::string> query_terms, std::size_t k,
                                   const CollectionStats* global = nullptr) const;
  std::vector<SearchResult> search(std::string_view query, std::size_t k) const;

  /// Directory layout: meta.json, terms.bin, postings.bin, docs.bin.
  void save(const std::filesystem::path& dir) const;
  static SparseIndex load(const std::filesystem::path& dir);

  static constexpr std::uint32_t kFormatVersion = 1;

 private:
  double term_weight(std::uint32_t tf, std::uint32_t dl, double term_idf, double avgdl) const noexcept;

  BM25Params params_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<PostingList> postings_;
  std::vector<std::string> ids_;
  std::vector<std::uint32_t> lengths_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  std::uint64_t total_length_ = 0;
};

SparseIndex build_sparse_index(std::span<const corpus::Passage> passages, BM25Params params = {});

}  // namespace psearch::sparse
