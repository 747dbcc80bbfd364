#include "psearch/corpus/ngram.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>

#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::corpus {

void NgramParams::validate() const {
  if (n < 1) throw ConfigError("n-gram size must be at least 1");
}

NgramSet::NgramSet(NgramParams params, Mode mode) : params_(params), mode_(mode) {
  params_.validate();
  if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
}

template <typename Fn>
void NgramSet::for_each_window(std::string_view text, Fn&& fn) const {
  auto tokens = text::split_whitespace(text);
  if (tokens.size() < params_.n) return;
  std::vector<std::string> folded;
  folded.reserve(tokens.size());
  for (auto t : tokens) folded.push_back(params_.case_folding ? text::fold_case(t) : std::string(t));

  std::string window;
  for (std::size_t i = 0; i + params_.n <= folded.size(); ++i) {
    window.clear();
    for (std::size_t j = i; j < i + params_.n; ++j) {
      if (j > i) window.push_back(' ');
      window += folded[j];
    }
    if (fn(std::string_view(window))) return;
  }
}

NgramSet::Key NgramSet::digest(std::string_view window) {
  unsigned char out[16];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(window.data()), window.size(),
                     nullptr, 0);
  Key key;
  std::memcpy(&key.hi, out, 8);
  std::memcpy(&key.lo, out + 8, 8);
  return key;
}

void NgramSet::insert_text(std::string_view text) {
  if (frozen_) throw std::logic_error("NgramSet is frozen");
  for_each_window(text, [&](std::string_view window) {
    if (mode_ == Mode::hashed) {
      hashed_.insert(digest(window));
    } else {
      exact_.emplace(window);
    }
    return false;
  });
}

bool NgramSet::contains_any(std::string_view text) const {
  bool found = false;
  for_each_window(text, [&](std::string_view window) {
    found = mode_ == Mode::hashed ? hashed_.contains(digest(window)) : exact_.contains(std::string(window));
    return found;
  });
  return found;
}

std::size_t NgramSet::count() const noexcept { return mode_ == Mode::hashed ? hashed_.size() : exact_.size(); }

NgramSet build_ngram_set(std::span<const Passage> passages, const NgramParams& params, NgramSet::Mode mode) {
  NgramSet set(params, mode);
  for (const auto& p : passages) set.insert_text(p.text);
  set.freeze();
  return set;
}

bool is_overlap_based(const Passage& passage, const NgramSet& reference, const NgramParams& params) {
  if (!(params == reference.params())) {
    throw ConfigError("n-gram parameters differ from the reference set (n=" + std::to_string(params.n) +
                      " vs n=" + std::to_string(reference.params().n) + ")");
  }
  return reference.contains_any(passage.text);
}

}  // namespace psearch::corpus
