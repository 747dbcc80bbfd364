#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cli/config.hpp"

namespace psearch::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,   // bad flags or configuration, missing inputs
  kInputError = 3,    // an input record violates its schema
  kRuntimeError = 4,  // build, I/O, transport failures
};

/// Maps the library's exception classes onto exit codes.
int exit_code_for(const std::exception& e) noexcept;

/// Throws ConfigError naming every path that is unset or does not exist.
void require_inputs(std::initializer_list<std::pair<const char*, std::filesystem::path>> inputs);

struct IngestOptions {
  std::filesystem::path input;
  std::filesystem::path output;
};
/// Returns {documents, accepted, passages, tokens, skipped: {reason: n}, malformed}.
nlohmann::json cmd_ingest(const PipelineConfig& config, const IngestOptions& options);

enum class BuildWhich { sparse, dense, both };

struct BuildOptions {
  BuildWhich which = BuildWhich::both;
  std::size_t batch_size = 1000;  // cluster pushes only
  bool to_cluster = false;
};
/// Local builds write index directories with a manifest.json each
/// ({kind, count, params, seed, duration_ms, content_hash}). With
/// to_cluster, passages (and embeddings) are routed to the cluster.
nlohmann::json cmd_build(const PipelineConfig& config, const BuildOptions& options);

/// BLAKE2b-256 over every file of an index directory except
/// manifest.json, in path order. Hex.
std::string content_hash(const std::filesystem::path& dir);

struct ServeOptions {
  std::size_t server_index = 0;
  std::filesystem::path data_dir;
};
/// Serves until SIGINT or SIGTERM, then snapshots every shard.
void cmd_serve(const PipelineConfig& config, const ServeOptions& options);

enum class Backend { sparse, dense, cluster };

struct QueryOptions {
  std::filesystem::path queries;  // JSONL {id, text | input}
  std::filesystem::path output;   // run file
  std::size_t k = 100;
  Backend backend = Backend::sparse;
  std::optional<std::size_t> ef_search;
  std::filesystem::path latency_out;  // optional JSON with percentiles
};
/// Returns {queries, p50_ms, p95_ms, p99_ms, max_ms, degraded}.
nlohmann::json cmd_query(const PipelineConfig& config, const QueryOptions& options);

struct EvalOptions {
  std::filesystem::path run;
  std::filesystem::path examples;
  std::filesystem::path passages;  // overrides the run header and config
  std::vector<std::size_t> ks{1, 20, 100};
  std::string dataset;
  bool contamination_filter = false;
  std::filesystem::path overlap_flags;  // one flagged passage id per line
  std::size_t top_m = 100;
  bool by_category = false;
  std::filesystem::path scores;
  std::filesystem::path oracle_with;
  std::filesystem::path output;  // JSON report
};
/// Returns the report as JSON and writes the table to `table`.
nlohmann::json cmd_eval(const PipelineConfig& config, const EvalOptions& options, std::string& table);

struct MineOptions {
  std::filesystem::path run;
  std::filesystem::path examples;
  std::filesystem::path passages;
  std::filesystem::path output;  // JSONL {example_id, passage_id, rank}
};
/// Returns {examples, mined, missed}.
nlohmann::json cmd_mine(const PipelineConfig& config, const MineOptions& options);

struct StatsOptions {
  std::filesystem::path passages;
  std::filesystem::path reference;  // passages of the reference corpus
  std::filesystem::path flags_out;  // flagged passage ids, one per line
  bool cluster = false;
};
nlohmann::json cmd_stats(const PipelineConfig& config, const StatsOptions& options);

struct QueryRecord {
  std::string id;
  std::string text;
};
/// JSONL {id, text} or {id, input}; ParseError with line numbers.
std::vector<QueryRecord> read_queries(const std::filesystem::path& path);

/// Nearest-rank percentile of unsorted samples; 0 when empty.
double percentile(std::vector<double> samples, double p);

}  // namespace psearch::cli
