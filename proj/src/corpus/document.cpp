#include "psearch/corpus/document.hpp"

#include <nlohmann/json.hpp>

#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::corpus {
namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::optional<std::string> string_field(const nlohmann::json& record, const char* name) {
  auto it = record.find(name);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError(name, std::string("field '") + name + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::head: return "head";
    case Tier::middle: return "middle";
    case Tier::tail: return "tail";
    case Tier::unknown: return "unknown";
  }
  return "unknown";
}

Tier parse_tier(std::string_view name) {
  auto lowered = ascii_lower(name);
  if (lowered == "head") return Tier::head;
  if (lowered == "middle") return Tier::middle;
  if (lowered == "tail") return Tier::tail;
  if (lowered == "unknown" || lowered.empty()) return Tier::unknown;
  throw ParseError("tier", "unknown tier '" + std::string(name) + "'");
}

std::string_view to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::url_excluded: return "url_excluded";
    case SkipReason::tier_rejected: return "tier_rejected";
    case SkipReason::empty_body: return "empty_body";
  }
  return "unknown";
}

std::string make_passage_id(std::string_view doc_id, std::uint32_t chunk_index) {
  std::string id(doc_id);
  id += "::";
  id += std::to_string(chunk_index);
  return id;
}

IngestResult ingest_document(const nlohmann::json& record, const IngestFilter& filter) {
  if (!record.is_object()) throw ParseError("", "record is not an object");

  auto url = string_field(record, "url");
  if (!url || url->empty()) throw ParseError("url", "record has no url");

  auto body = string_field(record, "raw_content");
  if (!body) body = string_field(record, "body");
  if (!body) throw ParseError("body", "record has neither raw_content nor body");

  Document doc;
  if (auto id = string_field(record, "id")) {
    doc.doc_id = std::move(*id);
  } else if (auto digest = string_field(record, "digest")) {
    doc.doc_id = std::move(*digest);
  } else {
    doc.doc_id = *url;
  }
  doc.url = std::move(*url);
  doc.title = string_field(record, "title").value_or("");
  doc.body = std::move(*body);
  if (auto tier = string_field(record, "tier")) doc.tier = parse_tier(*tier);

  auto lowered_url = ascii_lower(doc.url);
  for (const auto& excluded : filter.excluded_url_substrings) {
    if (!excluded.empty() && lowered_url.find(ascii_lower(excluded)) != std::string::npos) {
      return Skipped{doc.doc_id, SkipReason::url_excluded};
    }
  }
  if (!filter.accepted_tiers.contains(doc.tier)) return Skipped{doc.doc_id, SkipReason::tier_rejected};
  if (text::count_tokens(doc.body) == 0) return Skipped{doc.doc_id, SkipReason::empty_body};
  return doc;
}

std::vector<Passage> chunk_document(const Document& doc, std::size_t window) {
  if (window == 0) throw ConfigError("chunk window must be at least 1");
  auto tokens = text::split_whitespace(doc.body);
  std::vector<Passage> passages;
  passages.reserve((tokens.size() + window - 1) / window);
  for (std::size_t first = 0; first < tokens.size(); first += window) {
    std::size_t last = std::min(first + window, tokens.size()) - 1;
    const char* begin = tokens[first].data();
    const char* end = tokens[last].data() + tokens[last].size();
    Passage p;
    p.chunk_index = static_cast<std::uint32_t>(passages.size());
    p.passage_id = make_passage_id(doc.doc_id, p.chunk_index);
    p.doc_id = doc.doc_id;
    p.title = doc.title;
    p.text.assign(begin, end);
    p.token_count = static_cast<std::uint32_t>(last - first + 1);
    passages.push_back(std::move(p));
  }
  return passages;
}

}  // namespace psearch::corpus
