#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace psearch::text {

/// Splits on Unicode whitespace (White_Space property). Views point into
/// `utf8`; empty tokens are never produced.
std::vector<std::string_view> split_whitespace(std::string_view utf8);

std::size_t count_tokens(std::string_view utf8);

/// Unicode default case folding. ASCII input takes a fast path.
std::string fold_case(std::string_view utf8);

/// Case-folds, collapses whitespace runs to one space and trims.
std::string normalize(std::string_view utf8);

/// Case-folded maximal runs of alphanumeric code points.
std::vector<std::string> alnum_runs(std::string_view utf8);

}  // namespace psearch::text
