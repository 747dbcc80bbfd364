#include "cli/config.hpp"

#include <nlohmann/json.hpp>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"

namespace psearch::cli {
namespace {

using nlohmann::json;

json paths_json(const Paths& p) {
  json j = json::object();
  auto put = [&](const char* name, const std::filesystem::path& v) {
    if (!v.empty()) j[name] = v.string();
  };
  put("corpus", p.corpus);
  put("passages", p.passages);
  put("embeddings", p.embeddings);
  put("query_embeddings", p.query_embeddings);
  put("sparse_index", p.sparse_index);
  put("dense_index", p.dense_index);
  put("runs", p.runs);
  put("reports", p.reports);
  return j;
}

Paths paths_from(const json& j) {
  Paths p;
  auto get = [&](const char* name, std::filesystem::path& v) {
    if (j.contains(name)) v = j[name].get<std::string>();
  };
  get("corpus", p.corpus);
  get("passages", p.passages);
  get("embeddings", p.embeddings);
  get("query_embeddings", p.query_embeddings);
  get("sparse_index", p.sparse_index);
  get("dense_index", p.dense_index);
  get("runs", p.runs);
  get("reports", p.reports);
  return p;
}

}  // namespace

void PipelineConfig::validate() const {
  if (chunk_window < 1) throw ConfigError("chunk_window must be >= 1");
  ngram.validate();
  bm25.validate();
  hnsw.validate();
  if (cluster) cluster->validate();
}

bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
  return a.paths == b.paths && a.chunk_window == b.chunk_window && a.ngram == b.ngram &&
         a.filter.excluded_url_substrings == b.filter.excluded_url_substrings &&
         a.filter.accepted_tiers == b.filter.accepted_tiers && a.error_budget == b.error_budget &&
         a.bm25 == b.bm25 && a.dense_mode == b.dense_mode && a.hnsw == b.hnsw && a.cluster == b.cluster &&
         a.seed == b.seed;
}

void to_json(json& j, const PipelineConfig& c) {
  json tiers = json::array();
  for (auto t : c.filter.accepted_tiers) tiers.push_back(corpus::to_string(t));
  j = {{"paths", paths_json(c.paths)},
       {"chunk_window", c.chunk_window},
       {"ngram", {{"n", c.ngram.n}, {"case_folding", c.ngram.case_folding}}},
       {"ingest",
        {{"excluded_url_substrings", c.filter.excluded_url_substrings},
         {"accepted_tiers", tiers},
         {"error_budget", c.error_budget}}},
       {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
       {"dense_mode", dense::to_string(c.dense_mode)},
       {"hnsw",
        {{"M", c.hnsw.M},
         {"ef_construction", c.hnsw.ef_construction},
         {"ef_search", c.hnsw.ef_search},
         {"train_size", c.hnsw.train_size}}}};
  if (c.cluster) j["cluster"] = *c.cluster;
  if (c.seed) j["seed"] = *c.seed;
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  if (j.contains("paths")) c.paths = paths_from(j["paths"]);
  c.chunk_window = j.value("chunk_window", c.chunk_window);
  if (j.contains("ngram")) {
    c.ngram.n = j["ngram"].value("n", c.ngram.n);
    c.ngram.case_folding = j["ngram"].value("case_folding", c.ngram.case_folding);
  }
  if (j.contains("ingest")) {
    const auto& in = j["ingest"];
    if (in.contains("excluded_url_substrings")) {
      c.filter.excluded_url_substrings = in["excluded_url_substrings"].get<std::vector<std::string>>();
    }
    if (in.contains("accepted_tiers")) {
      c.filter.accepted_tiers.clear();
      for (const auto& t : in["accepted_tiers"]) c.filter.accepted_tiers.insert(corpus::parse_tier(t.get<std::string>()));
    }
    c.error_budget = in.value("error_budget", c.error_budget);
  }
  if (j.contains("bm25")) {
    c.bm25.k1 = j["bm25"].value("k1", c.bm25.k1);
    c.bm25.b = j["bm25"].value("b", c.bm25.b);
  }
  if (j.contains("dense_mode")) c.dense_mode = dense::parse_dense_mode(j["dense_mode"].get<std::string>());
  if (j.contains("hnsw")) {
    const auto& h = j["hnsw"];
    c.hnsw.M = h.value("M", c.hnsw.M);
    c.hnsw.ef_construction = h.value("ef_construction", c.hnsw.ef_construction);
    c.hnsw.ef_search = h.value("ef_search", c.hnsw.ef_search);
    c.hnsw.train_size = h.value("train_size", c.hnsw.train_size);
  }
  if (j.contains("cluster")) c.cluster = j["cluster"].get<distributed::ClusterConfig>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  PipelineConfig c;
  try {
    c = json::parse(io::read_file(path)).get<PipelineConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, json(*this).dump(2) + "\n");
}

}  // namespace psearch::cli
