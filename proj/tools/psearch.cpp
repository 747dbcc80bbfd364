// psearch: ingest, build, serve, query, eval, mine, stats.

#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli/commands.hpp"
#include "psearch/errors.hpp"

using namespace psearch;
using namespace psearch::cli;

namespace {

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("psearch"));

  CLI::App app{"Web-scale passage retrieval: corpus ingestion, BM25 and HNSW indices, sharded serving, evaluation"};
  app.require_subcommand(1);

  std::string config_path, log_level = "info";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for dense index builds");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  // Path overrides shared by several commands.
  std::string passages, embeddings, query_embeddings, sparse_dir, dense_dir, cluster_path;
  auto add_paths = [&](CLI::App* cmd) {
    cmd->add_option("--passages", passages, "Passages file (JSONL)");
    cmd->add_option("--embeddings", embeddings, "Passage embeddings file");
    cmd->add_option("--query-embeddings", query_embeddings, "Query embeddings file");
    cmd->add_option("--sparse-index", sparse_dir, "Sparse index directory");
    cmd->add_option("--dense-index", dense_dir, "Dense index directory");
    cmd->add_option("--cluster-config", cluster_path, "Cluster config (JSON); replaces the config's cluster section");
  };

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Filter and chunk raw documents into passages");
  ingest_cmd->add_option("--input", ingest.input, "Documents (JSONL)");
  ingest_cmd->add_option("--output", ingest.output, "Passages output (JSONL)");
  std::optional<std::size_t> window, error_budget;
  ingest_cmd->add_option("--window", window, "Tokens per passage");
  ingest_cmd->add_option("--error-budget", error_budget, "Malformed records tolerated before aborting");

  BuildOptions build;
  std::string which = "both";
  std::optional<std::string> dense_mode;
  auto* build_cmd = app.add_subcommand("build", "Build sparse and/or dense indices, locally or into a cluster");
  build_cmd->add_option("--which", which, "sparse, dense or both")->check(CLI::IsMember({"sparse", "dense", "both"}));
  build_cmd->add_option("--dense-mode", dense_mode, "flat_exact or hnsw_sq8")
      ->check(CLI::IsMember({"flat_exact", "hnsw_sq8"}));
  build_cmd->add_flag("--cluster", build.to_cluster, "Route passages to the running cluster instead");
  build_cmd->add_option("--batch-size", build.batch_size, "Passages per add batch (cluster)");
  add_paths(build_cmd);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run one index server of the cluster until SIGINT/SIGTERM");
  serve_cmd->add_option("--server-index", serve.server_index, "Position of this server in the cluster config");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Shard storage directory")->required();
  add_paths(serve_cmd);

  QueryOptions query;
  std::string backend = "sparse";
  auto* query_cmd = app.add_subcommand("query", "Retrieve top-k passages for a query file and write a run file");
  query_cmd->add_option("--queries", query.queries, "Queries (JSONL {id, text|input})")->required();
  query_cmd->add_option("--output", query.output, "Run file")->required();
  query_cmd->add_option("-k,--k", query.k, "Results per query");
  query_cmd->add_option("--backend", backend, "sparse, dense or cluster")
      ->check(CLI::IsMember({"sparse", "dense", "cluster"}));
  query_cmd->add_option("--ef", query.ef_search, "HNSW ef_search override");
  query_cmd->add_option("--latency-out", query.latency_out, "Write latency percentiles (JSON)");
  add_paths(query_cmd);

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "AIC/AEIC@k and corpus analyses for a run");
  eval_cmd->add_option("--run", ev.run, "Run file")->required();
  eval_cmd->add_option("--examples", ev.examples, "Examples (JSONL)")->required();
  eval_cmd->add_option("--passages", ev.passages, "Passage texts (overrides the run header)");
  eval_cmd->add_option("--k", ev.ks, "Cutoffs")->delimiter(',');
  eval_cmd->add_option("--dataset", ev.dataset, "Dataset label for the report");
  eval_cmd->add_flag("--contamination-filter", ev.contamination_filter,
                     "Drop passages containing the input verbatim before scoring");
  eval_cmd->add_option("--overlap-flags", ev.overlap_flags, "Flagged passage ids, one per line");
  eval_cmd->add_option("--top-m", ev.top_m, "Depth for the overlap median");
  eval_cmd->add_flag("--by-category", ev.by_category, "Per-category breakdown");
  eval_cmd->add_option("--scores", ev.scores, "Per-example scores (id<TAB>score)");
  eval_cmd->add_option("--oracle-with", ev.oracle_with, "Second score file for the best-of-two oracle");
  eval_cmd->add_option("--output", ev.output, "Report (JSON)");

  MineOptions mine;
  auto* mine_cmd = app.add_subcommand("mine", "Pick the top answer-bearing passage per example");
  mine_cmd->add_option("--run", mine.run, "Run file")->required();
  mine_cmd->add_option("--examples", mine.examples, "Examples (JSONL)")->required();
  mine_cmd->add_option("--passages", mine.passages, "Passage texts (overrides the run header)");
  mine_cmd->add_option("--output", mine.output, "Positives (JSONL)")->required();

  StatsOptions stats;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics and n-gram overlap, or cluster health");
  stats_cmd->add_option("--reference", stats.reference, "Reference passages for the overlap analysis");
  stats_cmd->add_option("--flags-out", stats.flags_out, "Write flagged passage ids");
  stats_cmd->add_flag("--cluster", stats.cluster, "Report cluster shard health instead");
  std::optional<std::size_t> ngram_n;
  stats_cmd->add_option("--ngram", ngram_n, "N-gram size");
  add_paths(stats_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    PipelineConfig config = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    if (seed) config.seed = seed;
    if (!passages.empty()) config.paths.passages = passages;
    if (!embeddings.empty()) config.paths.embeddings = embeddings;
    if (!query_embeddings.empty()) config.paths.query_embeddings = query_embeddings;
    if (!sparse_dir.empty()) config.paths.sparse_index = sparse_dir;
    if (!dense_dir.empty()) config.paths.dense_index = dense_dir;
    if (!cluster_path.empty()) config.cluster = distributed::ClusterConfig::load(cluster_path);
    if (window) config.chunk_window = *window;
    if (error_budget) config.error_budget = *error_budget;
    if (dense_mode) config.dense_mode = dense::parse_dense_mode(*dense_mode);
    if (ngram_n) config.ngram.n = *ngram_n;
    config.validate();

    if (*ingest_cmd) {
      print_json(cmd_ingest(config, ingest));
    } else if (*build_cmd) {
      static const std::map<std::string, BuildWhich> kinds{
          {"sparse", BuildWhich::sparse}, {"dense", BuildWhich::dense}, {"both", BuildWhich::both}};
      build.which = kinds.at(which);
      print_json(cmd_build(config, build));
    } else if (*serve_cmd) {
      cmd_serve(config, serve);
    } else if (*query_cmd) {
      static const std::map<std::string, Backend> kinds{
          {"sparse", Backend::sparse}, {"dense", Backend::dense}, {"cluster", Backend::cluster}};
      query.backend = kinds.at(backend);
      print_json(cmd_query(config, query));
    } else if (*eval_cmd) {
      std::string table;
      cmd_eval(config, ev, table);
      std::cout << table;
    } else if (*mine_cmd) {
      print_json(cmd_mine(config, mine));
    } else if (*stats_cmd) {
      print_json(cmd_stats(config, stats));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kOk;
}
