#include "psearch/sparse/bm25_index.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::sparse {
namespace {

constexpr std::uint32_t kDocsMagic = 0x31445350;   // "PSD1"
constexpr std::uint32_t kTermsMagic = 0x31545350;  // "PST1"

}  // namespace

void BM25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw ConfigError("BM25 k1 must be a finite value >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("BM25 b must lie in [0, 1]");
}

std::vector<std::string> analyze(std::string_view text) { return text::alnum_runs(text); }

std::string indexed_text(const corpus::Passage& passage) {
  if (passage.title.empty()) return passage.text;
  std::string s = passage.title;
  s.push_back(' ');
  s += passage.text;
  return s;
}

void CollectionStats::merge(const CollectionStats& other) {
  passage_count += other.passage_count;
  total_length += other.total_length;
  for (const auto& [term, df] : other.document_frequency) document_frequency[term] += df;
}

double idf(std::uint64_t passage_count, std::uint64_t df) noexcept {
  const double n = static_cast<double>(passage_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

SparseIndex::SparseIndex(BM25Params params) : params_(params) { params_.validate(); }

void SparseIndex::add(const corpus::Passage& passage) { add(passage.passage_id, indexed_text(passage)); }

void SparseIndex::add(std::string_view passage_id, std::string_view text) {
  std::string id(passage_id);
  if (ordinals_.contains(id)) throw BuildError("duplicate passage id '" + id + "'");

  auto terms = analyze(text);
  std::unordered_map<std::string_view, std::uint32_t> tf;
  std::vector<std::string_view> first_seen;
  for (const auto& t : terms) {
    if (tf[t]++ == 0) first_seen.push_back(t);
  }

  const auto ordinal = static_cast<std::uint32_t>(ids_.size());
  for (auto term : first_seen) {
    auto [it, inserted] = term_ids_.try_emplace(std::string(term), static_cast<std::uint32_t>(postings_.size()));
    if (inserted) postings_.push_back(PostingList{std::string(term), {}});
    postings_[it->second].postings.push_back(Posting{ordinal, tf[term]});
  }
  ids_.push_back(id);
  lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
  ordinals_.emplace(std::move(id), ordinal);
  total_length_ += terms.size();
}

double SparseIndex::avgdl() const noexcept {
  return ids_.empty() ? 0.0 : static_cast<double>(total_length_) / static_cast<double>(ids_.size());
}

const PostingList* SparseIndex::postings(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? nullptr : &postings_[it->second];
}

std::optional<std::uint32_t> SparseIndex::ordinal(std::string_view passage_id) const {
  auto it = ordinals_.find(std::string(passage_id));
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

CollectionStats SparseIndex::stats_for(std::span<const std::string> terms) const {
  CollectionStats stats;
  stats.passage_count = ids_.size();
  stats.total_length = total_length_;
  for (const auto& t : terms) {
    const auto* list = postings(t);
    stats.document_frequency[t] = list ? list->document_frequency() : 0;
  }
  return stats;
}

double SparseIndex::term_weight(std::uint32_t tf, std::uint32_t dl, double term_idf, double avgdl) const noexcept {
  const double f = static_cast<double>(tf);
  const double norm = avgdl > 0.0 ? static_cast<double>(dl) / avgdl : 1.0;
  return term_idf * (f * (params_.k1 + 1.0)) / (f + params_.k1 * (1.0 - params_.b + params_.b * norm));
}

double SparseIndex::score(std::span<const std::string> query_terms, std::uint32_t ordinal,
                          const CollectionStats* global) const {
  if (ordinal >= ids_.size()) throw std::out_of_range("passage ordinal out of range");
  const std::uint64_t n = global ? global->passage_count : ids_.size();
  const double avg = global ? global->avgdl() : avgdl();
  double total = 0.0;
  for (const auto& term : query_terms) {
    const auto* list = postings(term);
    if (!list) continue;
    auto it = std::lower_bound(list->postings.begin(), list->postings.end(), ordinal,
                               [](const Posting& p, std::uint32_t o) { return p.ordinal < o; });
    if (it == list->postings.end() || it->ordinal != ordinal) continue;
    std::uint64_t df = list->document_frequency();
    if (global) {
      auto g = global->document_frequency.find(term);
      df = g == global->document_frequency.end() ? df : g->second;
    }
    total += term_weight(it->tf, lengths_[ordinal], idf(n, df), avg);
  }
  return total;
}

std::vector<SearchResult> SparseIndex::search(std::span<const std::string> query_terms, std::size_t k,
                                              const CollectionStats* global) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  const std::uint64_t n = global ? global->passage_count : ids_.size();
  const double avg = global ? global->avgdl() : avgdl();

  std::vector<double> acc(ids_.size(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<bool> seen(ids_.size(), false);
  for (const auto& term : query_terms) {
    const auto* list = postings(term);
    if (!list) continue;
    std::uint64_t df = list->document_frequency();
    if (global) {
      auto g = global->document_frequency.find(term);
      df = g == global->document_frequency.end() ? df : g->second;
    }
    const double term_idf = idf(n, df);
    for (const auto& p : list->postings) {
      acc[p.ordinal] += term_weight(p.tf, lengths_[p.ordinal], term_idf, avg);
      if (!seen[p.ordinal]) {
        seen[p.ordinal] = true;
        touched.push_back(p.ordinal);
      }
    }
  }

  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return ids_[a] < ids_[b];
  };
  const std::size_t take = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);

  std::vector<SearchResult> results;
  results.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    results.push_back(SearchResult{ids_[touched[i]], acc[touched[i]], static_cast<std::uint32_t>(i + 1), 0});
  }
  return results;
}

std::vector<SearchResult> SparseIndex::search(std::string_view query, std::size_t k) const {
  auto terms = analyze(query);
  return search(terms, k);
}

void SparseIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);

  io::Writer docs;
  docs.put(kDocsMagic);
  docs.put(kFormatVersion);
  docs.put<std::uint64_t>(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    docs.put_string(ids_[i]);
    docs.put_varint(lengths_[i]);
  }

  io::Writer terms;
  io::Writer postings;
  terms.put(kTermsMagic);
  terms.put(kFormatVersion);
  terms.put<std::uint64_t>(postings_.size());
  for (const auto& list : postings_) {
    terms.put_string(list.term);
    terms.put_varint(list.document_frequency());
    terms.put_varint(postings.data().size());
    std::uint32_t prev = 0;
    for (const auto& p : list.postings) {
      postings.put_varint(p.ordinal - prev);
      postings.put_varint(p.tf);
      prev = p.ordinal;
    }
  }

  nlohmann::json meta{{"format_version", kFormatVersion},
                      {"kind", "bm25"},
                      {"passage_count", ids_.size()},
                      {"total_length", total_length_},
                      {"avgdl", avgdl()},
                      {"vocabulary_size", postings_.size()},
                      {"k1", params_.k1},
                      {"b", params_.b}};

  io::write_file_atomic(dir / "docs.bin", docs.data());
  io::write_file_atomic(dir / "terms.bin", terms.data());
  io::write_file_atomic(dir / "postings.bin", postings.data());
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

SparseIndex SparseIndex::load(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sparse index meta.json: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "bm25") throw FormatError("not a sparse index: " + dir.string());
  if (meta.value("format_version", 0u) != kFormatVersion) {
    throw FormatError("sparse index format version " + meta.value("format_version", nlohmann::json()).dump() +
                      " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
  SparseIndex index(BM25Params{meta.at("k1").get<double>(), meta.at("b").get<double>()});

  auto docs_data = io::read_file(dir / "docs.bin");
  io::Reader docs(docs_data);
  if (docs.get<std::uint32_t>() != kDocsMagic || docs.get<std::uint32_t>() != kFormatVersion) {
    throw FormatError("bad docs.bin header");
  }
  auto count = docs.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto id = docs.get_string();
    auto dl = static_cast<std::uint32_t>(docs.get_varint());
    index.ordinals_.emplace(id, static_cast<std::uint32_t>(i));
    index.ids_.push_back(std::move(id));
    index.lengths_.push_back(dl);
    index.total_length_ += dl;
  }

  auto terms_data = io::read_file(dir / "terms.bin");
  auto postings_data = io::read_file(dir / "postings.bin");
  io::Reader terms(terms_data);
  if (terms.get<std::uint32_t>() != kTermsMagic || terms.get<std::uint32_t>() != kFormatVersion) {
    throw FormatError("bad terms.bin header");
  }
  auto term_count = terms.get<std::uint64_t>();
  index.postings_.reserve(term_count);
  for (std::uint64_t t = 0; t < term_count; ++t) {
    PostingList list;
    list.term = terms.get_string();
    auto df = terms.get_varint();
    auto offset = terms.get_varint();
    if (offset > postings_data.size()) throw FormatError("posting offset out of range");
    io::Reader reader(std::string_view(postings_data).substr(offset));
    std::uint32_t prev = 0;
    list.postings.reserve(df);
    for (std::uint64_t i = 0; i < df; ++i) {
      prev += static_cast<std::uint32_t>(reader.get_varint());
      auto tf = static_cast<std::uint32_t>(reader.get_varint());
      if (prev >= count) throw FormatError("posting ordinal out of range");
      list.postings.push_back(Posting{prev, tf});
    }
    index.term_ids_.emplace(list.term, static_cast<std::uint32_t>(t));
    index.postings_.push_back(std::move(list));
  }
  if (meta.value("total_length", std::uint64_t{0}) != index.total_length_) {
    throw FormatError("sparse index total length does not match docs.bin");
  }
  return index;
}

SparseIndex build_sparse_index(std::span<const corpus::Passage> passages, BM25Params params) {
  SparseIndex index(params);
  for (const auto& p : passages) index.add(p);
  return index;
}

}  // namespace psearch::sparse
