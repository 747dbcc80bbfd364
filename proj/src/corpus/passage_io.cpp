#include "psearch/corpus/passage_io.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::corpus {

void write_passage(std::ostream& out, const Passage& passage) {
  nlohmann::json j{{"passage_id", passage.passage_id},
                   {"doc_id", passage.doc_id},
                   {"title", passage.title},
                   {"text", passage.text},
                   {"chunk_index", passage.chunk_index}};
  out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

void for_each_passage(const std::filesystem::path& path, const std::function<void(Passage&&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open passages file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("", std::string("invalid JSON: ") + e.what(), line_no);
    }
    auto require = [&](const char* field) -> const nlohmann::json& {
      auto it = j.find(field);
      if (it == j.end()) throw ParseError(field, std::string("missing field '") + field + "'", line_no);
      return *it;
    };
    try {
      Passage p;
      p.passage_id = require("passage_id").get<std::string>();
      p.doc_id = require("doc_id").get<std::string>();
      p.title = j.value("title", "");
      p.text = require("text").get<std::string>();
      p.chunk_index = require("chunk_index").get<std::uint32_t>();
      p.token_count = static_cast<std::uint32_t>(text::count_tokens(p.text));
      fn(std::move(p));
    } catch (const nlohmann::json::type_error& e) {
      throw ParseError("", std::string("wrong field type: ") + e.what(), line_no);
    }
  }
}

std::vector<Passage> read_passages(const std::filesystem::path& path) {
  std::vector<Passage> out;
  for_each_passage(path, [&](Passage&& p) { out.push_back(std::move(p)); });
  return out;
}

}  // namespace psearch::corpus
