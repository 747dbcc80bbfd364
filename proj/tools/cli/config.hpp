#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "psearch/corpus/document.hpp"
#include "psearch/corpus/ngram.hpp"
#include "psearch/dense/dense_index.hpp"
#include "psearch/distributed/cluster.hpp"
#include "psearch/sparse/bm25_index.hpp"

namespace psearch::cli {

struct Paths {
  std::filesystem::path corpus;            // raw documents, JSONL
  std::filesystem::path passages;          // chunked passages, JSONL
  std::filesystem::path embeddings;        // passage embeddings
  std::filesystem::path query_embeddings;  // query embeddings, keyed by query id
  std::filesystem::path sparse_index;
  std::filesystem::path dense_index;
  std::filesystem::path runs;
  std::filesystem::path reports;

  friend bool operator==(const Paths&, const Paths&) = default;
};

/// Pipeline configuration, a JSON file:
///   {
///     "paths": {"corpus": ..., "passages": ..., "embeddings": ..., "query_embeddings": ...,
///               "sparse_index": ..., "dense_index": ..., "runs": ..., "reports": ...},
///     "chunk_window": 100,
///     "ngram": {"n": 8, "case_folding": true},
///     "ingest": {"excluded_url_substrings": ["wikipedia.org"], "accepted_tiers": ["head", "unknown"],
///                "error_budget": 0},
///     "bm25": {"k1": 0.9, "b": 0.4},
///     "dense_mode": "hnsw_sq8",
///     "hnsw": {"M": 32, "ef_construction": 128, "ef_search": 128, "train_size": 100000},
///     "cluster": { ...ClusterConfig... },
///     "seed": 1234
///   }
/// Relative paths resolve against the working directory. Every field is
/// optional; flags given on the command line override the file.
struct PipelineConfig {
  Paths paths;
  std::size_t chunk_window = corpus::kDefaultWindow;
  corpus::NgramParams ngram;
  corpus::IngestFilter filter;
  std::size_t error_budget = 0;  // malformed input records tolerated by ingest
  sparse::BM25Params bm25;
  dense::DenseMode dense_mode = dense::DenseMode::hnsw_sq8;
  dense::HnswParams hnsw;
  std::optional<distributed::ClusterConfig> cluster;
  std::optional<std::uint64_t> seed;

  void validate() const;
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&);
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

}  // namespace psearch::cli
