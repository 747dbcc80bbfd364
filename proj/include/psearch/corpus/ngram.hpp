#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>

#include "psearch/corpus/document.hpp"

namespace psearch::corpus {

struct NgramParams {
  std::size_t n = 8;
  bool case_folding = true;

  void validate() const;
  friend bool operator==(const NgramParams&, const NgramParams&) = default;
};

/// Set of word n-grams. Two storage modes:
///  - hashed: each window (tokens joined by a single space) is reduced to a
///    128-bit BLAKE2b digest. For a set of m distinct n-grams the probability
///    of any false positive membership answer is below m^2 / 2^129, i.e.
///    under 1e-20 for m = 1e9. No false negatives.
///  - exact: stores the joined windows themselves.
///
/// Built by a single writer; after freeze() it is immutable and safe for
/// concurrent contains() calls.
class NgramSet {
 public:
  enum class Mode { hashed, exact };

  explicit NgramSet(NgramParams params = {}, Mode mode = Mode::hashed);

  /// Adds every n-gram of `text`. Texts shorter than n contribute nothing.
  void insert_text(std::string_view text);
  void freeze() noexcept { frozen_ = true; }
  bool frozen() const noexcept { return frozen_; }

  /// True iff some n-gram of `text` is in the set.
  bool contains_any(std::string_view text) const;

  std::size_t count() const noexcept;
  const NgramParams& params() const noexcept { return params_; }
  Mode mode() const noexcept { return mode_; }

 private:
  struct Key {
    std::uint64_t hi;
    std::uint64_t lo;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept { return k.lo ^ (k.hi * 0x9E3779B97F4A7C15ULL); }
  };

  template <typename Fn>
  void for_each_window(std::string_view text, Fn&& fn) const;
  static Key digest(std::string_view window);

  NgramParams params_;
  Mode mode_;
  bool frozen_ = false;
  std::unordered_set<Key, KeyHash> hashed_;
  std::unordered_set<std::string> exact_;
};

NgramSet build_ngram_set(std::span<const Passage> passages, const NgramParams& params,
                         NgramSet::Mode mode = NgramSet::Mode::hashed);

/// True iff the passage shares at least one n-gram with `reference`.
/// Throws ConfigError when `params` differ from the set's parameters.
bool is_overlap_based(const Passage& passage, const NgramSet& reference, const NgramParams& params);

}  // namespace psearch::corpus
