#include "psearch/text.hpp"

#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <cctype>

namespace psearch::text {
namespace {

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

// Decodes the code point at `pos` and advances it. Ill-formed sequences
// yield a negative value and consume one byte.
UChar32 next_code_point(std::string_view s, std::int32_t& pos) {
  UChar32 c;
  U8_NEXT(reinterpret_cast<const std::uint8_t*>(s.data()), pos, static_cast<std::int32_t>(s.size()), c);
  return c;
}

bool is_space(UChar32 c) { return c >= 0 && u_isUWhiteSpace(c); }

}  // namespace

std::vector<std::string_view> split_whitespace(std::string_view utf8) {
  std::vector<std::string_view> tokens;
  std::int32_t pos = 0;
  const auto end = static_cast<std::int32_t>(utf8.size());
  std::int32_t start = -1;
  while (pos < end) {
    const std::int32_t at = pos;
    UChar32 c = next_code_point(utf8, pos);
    if (is_space(c)) {
      if (start >= 0) {
        tokens.push_back(utf8.substr(start, at - start));
        start = -1;
      }
    } else if (start < 0) {
      start = at;
    }
  }
  if (start >= 0) tokens.push_back(utf8.substr(start));
  return tokens;
}

std::size_t count_tokens(std::string_view utf8) { return split_whitespace(utf8).size(); }

std::string fold_case(std::string_view utf8) {
  if (is_ascii(utf8)) {
    std::string out(utf8);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }
  auto ustr = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<std::int32_t>(utf8.size())));
  ustr.foldCase();
  std::string out;
  ustr.toUTF8String(out);
  return out;
}

std::string normalize(std::string_view utf8) {
  std::string joined;
  joined.reserve(utf8.size());
  for (auto token : split_whitespace(utf8)) {
    if (!joined.empty()) joined.push_back(' ');
    joined.append(token);
  }
  return fold_case(joined);
}

std::vector<std::string> alnum_runs(std::string_view utf8) {
  std::vector<std::string> runs;
  std::int32_t pos = 0;
  const auto end = static_cast<std::int32_t>(utf8.size());
  std::int32_t start = -1;
  auto flush = [&](std::int32_t stop) {
    if (start >= 0) {
      runs.push_back(fold_case(utf8.substr(start, stop - start)));
      start = -1;
    }
  };
  while (pos < end) {
    const std::int32_t at = pos;
    UChar32 c = next_code_point(utf8, pos);
    bool alnum = c >= 0 && (c < 0x80 ? std::isalnum(static_cast<int>(c)) != 0 : u_isalnum(c) != 0);
    if (alnum) {
      if (start < 0) start = at;
    } else {
      flush(at);
    }
  }
  flush(end);
  return runs;
}

}  // namespace psearch::text
