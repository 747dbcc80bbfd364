#include "psearch/eval/data.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "psearch/corpus/passage_io.hpp"
#include "psearch/errors.hpp"
#include "psearch/text.hpp"

namespace psearch::eval {

std::vector<EvalExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open examples file " + path.string());
  std::vector<EvalExample> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      EvalExample ex;
      if (!j.contains("id")) throw ParseError("id", "missing field 'id'", line_no);
      ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      if (!j.contains("input")) throw ParseError("input", "missing field 'input'", line_no);
      ex.input = j["input"].get<std::string>();
      if (!j.contains("answers") || !j["answers"].is_array()) {
        throw ParseError("answers", "field 'answers' must be a list", line_no);
      }
      ex.answers = j["answers"].get<std::vector<std::string>>();
      if (ex.answers.empty()) throw ParseError("answers", "example '" + ex.id + "' has no answers", line_no);
      if (j.contains("entity") && !j["entity"].is_null()) ex.entity = j["entity"].get<std::string>();
      if (j.contains("category") && !j["category"].is_null()) ex.category = j["category"].get<std::string>();
      if (!ids.insert(ex.id).second) throw ParseError("id", "duplicate example id '" + ex.id + "'", line_no);
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("", std::string("invalid example record: ") + e.what(), line_no);
    }
  }
  return out;
}

const std::vector<RankedPassage>* RunFile::find(std::string_view query_id) const {
  auto it = lists.find(std::string(query_id));
  return it == lists.end() ? nullptr : &it->second;
}

RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open run file " + path.string());
  RunFile run;
  std::string line;
  std::size_t line_no = 0;
  std::string current;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      constexpr std::string_view tag = "#passages\t";
      if (line.starts_with(tag)) run.passage_store = line.substr(tag.size());
      continue;
    }
    std::istringstream fields(line);
    std::string qid, pid, rank_s, score_s;
    if (!std::getline(fields, qid, '\t') || !std::getline(fields, pid, '\t') ||
        !std::getline(fields, rank_s, '\t') || !std::getline(fields, score_s)) {
      throw ParseError("", "expected 4 tab-separated fields", line_no);
    }
    RankedPassage rp;
    rp.passage_id = pid;
    try {
      rp.rank = static_cast<std::uint32_t>(std::stoul(rank_s));
      rp.score = std::stod(score_s);
    } catch (const std::exception&) {
      throw ParseError("rank", "rank/score not numeric", line_no);
    }
    auto& list = run.lists[qid];
    if (!list.empty() && qid != current) {
      throw ParseError("query_id", "lines for query '" + qid + "' are not contiguous", line_no);
    }
    current = qid;
    if (rp.rank != list.size() + 1) {
      throw ParseError("rank", fmt::format("query '{}': expected rank {}, got {}", qid, list.size() + 1, rp.rank),
                       line_no);
    }
    list.push_back(std::move(rp));
  }
  return run;
}

void write_run(std::ostream& out, const RunFile& run, std::span<const std::string> order) {
  if (run.passage_store) out << "#passages\t" << run.passage_store->string() << '\n';
  auto emit = [&](const std::string& qid, const std::vector<RankedPassage>& list) {
    for (const auto& rp : list) out << fmt::format("{}\t{}\t{}\t{}\n", qid, rp.passage_id, rp.rank, rp.score);
  };
  if (order.empty()) {
    for (const auto& [qid, list] : run.lists) emit(qid, list);
  } else {
    for (const auto& qid : order) {
      if (const auto* list = run.find(qid)) emit(qid, *list);
    }
  }
}

void PassageStore::add(const corpus::Passage& passage) {
  add(passage.passage_id, passage.title.empty() ? passage.text : passage.title + " " + passage.text);
}

void PassageStore::add(std::string id, std::string_view raw_text) { texts_[std::move(id)] = text::normalize(raw_text); }

const std::string* PassageStore::normalized(std::string_view passage_id) const {
  auto it = texts_.find(std::string(passage_id));
  return it == texts_.end() ? nullptr : &it->second;
}

PassageStore PassageStore::load(const std::filesystem::path& passages_jsonl) {
  PassageStore store;
  corpus::for_each_passage(passages_jsonl, [&](corpus::Passage&& p) { store.add(p); });
  return store;
}

std::map<std::string, double> read_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open score file " + path.string());
  std::map<std::string, double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("", "expected 'example_id<TAB>score'", line_no);
    try {
      scores[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ParseError("score", "score is not numeric", line_no);
    }
  }
  return scores;
}

}  // namespace psearch::eval
