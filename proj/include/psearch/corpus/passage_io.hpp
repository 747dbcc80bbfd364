#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "psearch/corpus/document.hpp"

namespace psearch::corpus {

/// One JSON object per line: {passage_id, doc_id, title, text, chunk_index}.
void write_passage(std::ostream& out, const Passage& passage);

/// Streams passages from a JSONL file. token_count is recomputed from text.
/// Schema violations throw ParseError carrying the line number.
void for_each_passage(const std::filesystem::path& path, const std::function<void(Passage&&)>& fn);

std::vector<Passage> read_passages(const std::filesystem::path& path);

}  // namespace psearch::corpus
