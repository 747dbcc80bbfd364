#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace psearch::corpus {

/// Quality tier assigned upstream by the crawl filter; consumed, not computed.
enum class Tier { head, middle, tail, unknown };

std::string_view to_string(Tier tier);
/// Throws ParseError for unrecognized names.
Tier parse_tier(std::string_view name);

struct Document {
  std::string doc_id;
  std::string url;
  std::string title;
  std::string body;
  Tier tier = Tier::unknown;
};

/// A fixed-window chunk of a document; the unit of indexing and retrieval.
struct Passage {
  std::string passage_id;  // doc_id + "::" + chunk_index
  std::string doc_id;
  std::string title;
  std::string text;
  std::uint32_t chunk_index = 0;
  std::uint32_t token_count = 0;

  friend bool operator==(const Passage&, const Passage&) = default;
};

std::string make_passage_id(std::string_view doc_id, std::uint32_t chunk_index);

struct IngestFilter {
  /// Case-insensitive substrings; a URL containing any of them is excluded.
  std::vector<std::string> excluded_url_substrings{"wikipedia.org"};
  std::set<Tier> accepted_tiers{Tier::head, Tier::unknown};
};

enum class SkipReason { url_excluded, tier_rejected, empty_body };

std::string_view to_string(SkipReason reason);

struct Skipped {
  std::string doc_id;
  SkipReason reason;
};

using IngestResult = std::variant<Document, Skipped>;

/// Validates and filters one CCNet-style record. Accepted fields: id (or
/// digest; falls back to url), url, title, raw_content or body, tier.
/// Missing url or body throws ParseError naming the field.
IngestResult ingest_document(const nlohmann::json& record, const IngestFilter& filter);

inline constexpr std::size_t kDefaultWindow = 100;

/// Non-overlapping windows of `window` whitespace tokens. Each passage's text
/// is the exact source span from its first to its last token, so
/// re-tokenizing the passages in order reproduces the document's tokens.
std::vector<Passage> chunk_document(const Document& doc, std::size_t window = kDefaultWindow);

}  // namespace psearch::corpus
