#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <sodium.h>
#include <spdlog/spdlog.h>

#include "psearch/binary_io.hpp"
#include "psearch/corpus/passage_io.hpp"
#include "psearch/corpus/stats.hpp"
#include "psearch/distributed/server.hpp"
#include "psearch/errors.hpp"
#include "psearch/eval/report.hpp"
#include "psearch/text.hpp"

namespace psearch::cli {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

json bm25_json(const sparse::BM25Params& p) { return {{"k1", p.k1}, {"b", p.b}}; }

json hnsw_json(const dense::HnswParams& p) {
  return {{"M", p.M},
          {"ef_construction", p.ef_construction},
          {"ef_search", p.ef_search},
          {"seed", p.seed},
          {"train_size", p.train_size}};
}

void write_manifest(const std::filesystem::path& dir, json manifest, double duration_ms) {
  manifest["content_hash"] = content_hash(dir);
  manifest["duration_ms"] = std::llround(duration_ms);
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

json build_sparse(const PipelineConfig& config) {
  require_inputs({{"passages", config.paths.passages}});
  if (config.paths.sparse_index.empty()) throw ConfigError("paths.sparse_index is not set");
  const auto start = Clock::now();
  sparse::SparseIndex index(config.bm25);
  corpus::for_each_passage(config.paths.passages, [&](corpus::Passage&& p) { index.add(p); });
  index.save(config.paths.sparse_index);
  json manifest{{"kind", "sparse"},
                {"count", index.size()},
                {"vocabulary", index.vocabulary_size()},
                {"params", bm25_json(config.bm25)}};
  write_manifest(config.paths.sparse_index, manifest, elapsed_ms(start));
  spdlog::info("sparse index: {} passages, {} terms -> {}", index.size(), index.vocabulary_size(),
               config.paths.sparse_index.string());
  return manifest;
}

dense::HnswParams seeded_hnsw(const PipelineConfig& config) {
  if (!config.seed) throw ConfigError("dense builds need a seed (--seed or \"seed\" in the config)");
  auto params = config.hnsw;
  params.seed = *config.seed;
  return params;
}

json build_dense_local(const PipelineConfig& config) {
  require_inputs({{"embeddings", config.paths.embeddings}});
  if (config.paths.dense_index.empty()) throw ConfigError("paths.dense_index is not set");
  const auto params = seeded_hnsw(config);
  const auto start = Clock::now();
  const auto records = dense::read_embeddings(config.paths.embeddings);
  const auto index = dense::build_dense(records, config.dense_mode, params);
  index.save(config.paths.dense_index);
  json manifest{{"kind", "dense"},
                {"mode", dense::to_string(config.dense_mode)},
                {"count", index.size()},
                {"dim", index.dim()},
                {"params", hnsw_json(params)},
                {"seed", params.seed}};
  write_manifest(config.paths.dense_index, manifest, elapsed_ms(start));
  spdlog::info("dense index ({}): {} vectors, dim {} -> {}", dense::to_string(config.dense_mode), index.size(),
               index.dim(), config.paths.dense_index.string());
  return manifest;
}

json build_cluster(const PipelineConfig& config, const BuildOptions& options) {
  if (!config.cluster) throw ConfigError("build --cluster needs a \"cluster\" section in the config");
  const bool with_text = options.which != BuildWhich::dense;
  const bool with_vectors = options.which != BuildWhich::sparse;
  require_inputs({{"passages", config.paths.passages}});
  if (with_vectors) require_inputs({{"embeddings", config.paths.embeddings}});
  if (options.batch_size < 1) throw ConfigError("batch size must be >= 1");

  std::unordered_map<std::string, std::vector<float>> vectors;
  if (with_vectors) {
    dense::EmbeddingReader reader(config.paths.embeddings);
    dense::EmbeddingRecord rec;
    while (reader.next(rec)) vectors.insert_or_assign(rec.id, std::move(rec.values));
  }

  const auto start = Clock::now();
  distributed::ClusterClient client(*config.cluster);
  distributed::AddBatch batch;
  std::map<std::uint32_t, std::size_t> routed;
  std::size_t total = 0;
  auto flush = [&] {
    if (batch.empty()) return;
    routed[client.route_add(batch)] += batch.size();
    total += batch.size();
    batch.clear();
  };
  corpus::for_each_passage(config.paths.passages, [&](corpus::Passage&& p) {
    distributed::BatchItem item;
    item.passage_id = p.passage_id;
    if (with_text) {
      item.title = std::move(p.title);
      item.text = std::move(p.text);
    }
    if (with_vectors) {
      auto it = vectors.find(p.passage_id);
      if (it == vectors.end()) throw BuildError("no embedding for passage '" + p.passage_id + "'");
      item.vector = std::move(it->second);
      vectors.erase(it);
    }
    batch.push_back(std::move(item));
    if (batch.size() >= options.batch_size) flush();
  });
  flush();
  if (!vectors.empty()) spdlog::warn("{} embedding(s) have no matching passage and were not indexed", vectors.size());

  json per_shard = json::object();
  for (const auto& [shard, n] : routed) per_shard[std::to_string(shard)] = n;
  spdlog::info("routed {} passages to {} shard(s) in {:.0f} ms", total, routed.size(), elapsed_ms(start));
  return {{"kind", "cluster"}, {"count", total}, {"per_shard", per_shard}};
}

std::unordered_map<std::string, std::vector<float>> load_query_vectors(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<float>> out;
  dense::EmbeddingReader reader(path);
  dense::EmbeddingRecord rec;
  while (reader.next(rec)) out.insert_or_assign(rec.id, std::move(rec.values));
  return out;
}

std::vector<eval::RankedPassage> to_ranked(const std::vector<SearchResult>& results) {
  std::vector<eval::RankedPassage> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back({r.passage_id, r.score, r.rank});
  return out;
}

std::filesystem::path passage_store_path(const PipelineConfig& config, const std::filesystem::path& override_path,
                                         const eval::RunFile& run) {
  if (!override_path.empty()) return override_path;
  if (run.passage_store) return *run.passage_store;
  if (!config.paths.passages.empty()) return config.paths.passages;
  throw ConfigError("passage texts are not resolvable: pass --passages or set paths.passages");
}

std::set<std::string> read_id_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.insert(line);
  }
  return ids;
}

}  // namespace

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const ParseError*>(&e)) return kInputError;
  return kRuntimeError;
}

void require_inputs(std::initializer_list<std::pair<const char*, std::filesystem::path>> inputs) {
  std::vector<std::string> problems;
  for (const auto& [name, path] : inputs) {
    if (path.empty()) {
      problems.push_back(fmt::format("{} is not set", name));
    } else if (!std::filesystem::exists(path)) {
      problems.push_back(fmt::format("{} '{}' does not exist", name, path.string()));
    }
  }
  if (problems.empty()) return;
  std::string msg = problems.front();
  for (std::size_t i = 1; i < problems.size(); ++i) msg += "; " + problems[i];
  throw ConfigError(msg);
}

std::string content_hash(const std::filesystem::path& dir) {
  if (sodium_init() < 0) throw Error("libsodium initialization failed");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  crypto_generichash_state state;
  unsigned char digest[32];
  crypto_generichash_init(&state, nullptr, 0, sizeof digest);
  for (const auto& f : files) {
    const auto rel = std::filesystem::relative(f, dir).generic_string();
    const auto data = io::read_file(f);
    const std::uint64_t sizes[2] = {rel.size(), data.size()};
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(sizes), sizeof sizes);
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(rel.data()), rel.size());
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(data.data()), data.size());
  }
  crypto_generichash_final(&state, digest, sizeof digest);
  std::string hex;
  for (unsigned char b : digest) hex += fmt::format("{:02x}", b);
  return hex;
}

json cmd_ingest(const PipelineConfig& config, const IngestOptions& options) {
  const auto input = options.input.empty() ? config.paths.corpus : options.input;
  const auto output = options.output.empty() ? config.paths.passages : options.output;
  require_inputs({{"corpus", input}});
  if (output.empty()) throw ConfigError("no output: pass --output or set paths.passages");

  std::ifstream in(input);
  if (!in) throw Error("cannot open " + input.string());
  auto out = open_output(output);

  std::size_t documents = 0, accepted = 0, passages = 0, tokens = 0, malformed = 0;
  std::map<std::string, std::size_t> skipped;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++documents;
    corpus::IngestResult result;
    try {
      result = corpus::ingest_document(json::parse(line), config.filter);
    } catch (const json::parse_error& e) {
      if (++malformed > config.error_budget) throw ParseError("", "malformed JSON: " + std::string(e.what()), line_no);
      spdlog::warn("line {}: malformed JSON skipped", line_no);
      continue;
    } catch (const ParseError& e) {
      if (++malformed > config.error_budget) throw ParseError(e.field(), e.what(), line_no);
      spdlog::warn("line {}: {}", line_no, e.what());
      continue;
    }
    if (const auto* skip = std::get_if<corpus::Skipped>(&result)) {
      ++skipped[std::string(corpus::to_string(skip->reason))];
      continue;
    }
    ++accepted;
    for (const auto& p : corpus::chunk_document(std::get<corpus::Document>(result), config.chunk_window)) {
      corpus::write_passage(out, p);
      ++passages;
      tokens += p.token_count;
    }
  }
  out.close();
  if (!out) throw Error("failed writing " + output.string());

  json skipped_json = json::object();
  for (const auto& [reason, n] : skipped) skipped_json[reason] = n;
  json summary{{"documents", documents}, {"accepted", accepted}, {"passages", passages},
               {"tokens", tokens},       {"skipped", skipped_json}, {"malformed", malformed}};
  spdlog::info("ingest: {} documents, {} accepted, {} passages", documents, accepted, passages);
  return summary;
}

json cmd_build(const PipelineConfig& config, const BuildOptions& options) {
  if (options.to_cluster) return build_cluster(config, options);
  if (options.which != BuildWhich::sparse) seeded_hnsw(config);  // fail before any work
  json out = json::object();
  if (options.which != BuildWhich::dense) out["sparse"] = build_sparse(config);
  if (options.which != BuildWhich::sparse) out["dense"] = build_dense_local(config);
  return out;
}

void cmd_serve(const PipelineConfig& config, const ServeOptions& options) {
  if (!config.cluster) throw ConfigError("serve needs a \"cluster\" section in the config");
  const auto& cluster = *config.cluster;
  if (options.server_index >= cluster.servers.size()) {
    throw ConfigError(fmt::format("server index {} out of range (cluster has {} servers)", options.server_index,
                                  cluster.servers.size()));
  }
  if (options.data_dir.empty()) throw ConfigError("serve needs --data-dir");

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  distributed::ServerOptions server_options;
  server_options.host = cluster.servers[options.server_index].host;
  server_options.port = cluster.servers[options.server_index].port;
  server_options.shard_ids = cluster.shards_of(options.server_index);
  server_options.data_dir = options.data_dir;
  server_options.shard = cluster.shard;
  distributed::IndexServer server(server_options);
  server.start();
  spdlog::info("serving shards [{}] on {}:{}", fmt::join(server_options.shard_ids, ", "), server_options.host,
               server.port());
  std::cout << "ready " << server_options.host << ':' << server.port() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {}: snapshotting and shutting down", sig);
  server.stop(true);
}

std::vector<QueryRecord> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<QueryRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("", "malformed JSON: " + std::string(e.what()), line_no);
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) throw ParseError("id", "missing string field 'id'", line_no);
    QueryRecord q;
    q.id = j["id"].get<std::string>();
    const char* field = j.contains("text") ? "text" : "input";
    if (!j.contains(field) || !j[field].is_string()) {
      throw ParseError("text", "missing string field 'text' (or 'input')", line_no);
    }
    q.text = j[field].get<std::string>();
    if (!seen.insert(q.id).second) throw ParseError("id", "duplicate query id '" + q.id + "'", line_no);
    out.push_back(std::move(q));
  }
  return out;
}

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

json cmd_query(const PipelineConfig& config, const QueryOptions& options) {
  require_inputs({{"queries", options.queries}});
  if (options.output.empty()) throw ConfigError("query needs --output");
  if (options.k < 1) throw ConfigError("k must be at least 1");
  const auto queries = read_queries(options.queries);

  const bool vectors_needed =
      options.backend == Backend::dense || (options.backend == Backend::cluster && !config.paths.query_embeddings.empty());
  std::unordered_map<std::string, std::vector<float>> qvec;
  if (vectors_needed) {
    require_inputs({{"query_embeddings", config.paths.query_embeddings}});
    qvec = load_query_vectors(config.paths.query_embeddings);
  }
  auto vector_for = [&](const QueryRecord& q) -> const std::vector<float>& {
    auto it = qvec.find(q.id);
    if (it == qvec.end()) throw ConfigError("no query embedding for query '" + q.id + "'");
    return it->second;
  };

  std::optional<sparse::SparseIndex> sparse_index;
  std::optional<dense::DenseIndex> dense_index;
  std::optional<distributed::ClusterClient> client;
  switch (options.backend) {
    case Backend::sparse:
      require_inputs({{"sparse_index", config.paths.sparse_index}});
      sparse_index = sparse::SparseIndex::load(config.paths.sparse_index);
      break;
    case Backend::dense:
      require_inputs({{"dense_index", config.paths.dense_index}});
      dense_index = dense::DenseIndex::load(config.paths.dense_index);
      break;
    case Backend::cluster:
      if (!config.cluster) throw ConfigError("the cluster backend needs a \"cluster\" section in the config");
      client.emplace(*config.cluster);
      break;
  }

  eval::RunFile run;
  if (!config.paths.passages.empty()) run.passage_store = std::filesystem::absolute(config.paths.passages);
  std::vector<std::string> order;
  std::vector<double> latencies;
  std::size_t degraded = 0;
  for (const auto& q : queries) {
    const auto start = Clock::now();
    std::vector<SearchResult> results;
    switch (options.backend) {
      case Backend::sparse:
        results = sparse_index->search(q.text, options.k);
        break;
      case Backend::dense:
        results = dense_index->search(vector_for(q), options.k, options.ef_search);
        break;
      case Backend::cluster: {
        distributed::Query query = vectors_needed ? distributed::Query(vector_for(q)) : distributed::Query(q.text);
        auto response = client->scatter_search(query, options.k, options.ef_search);
        if (response.degraded) {
          ++degraded;
          spdlog::warn("query '{}': degraded, missing shards [{}]", q.id, fmt::join(response.missing_shards, ", "));
        }
        results = std::move(response.results);
        break;
      }
    }
    latencies.push_back(elapsed_ms(start));
    run.lists[q.id] = to_ranked(results);
    order.push_back(q.id);
  }

  auto out = open_output(options.output);
  eval::write_run(out, run, order);
  out.close();
  if (!out) throw Error("failed writing " + options.output.string());

  json summary{{"queries", queries.size()},
               {"p50_ms", percentile(latencies, 50)},
               {"p95_ms", percentile(latencies, 95)},
               {"p99_ms", percentile(latencies, 99)},
               {"max_ms", percentile(latencies, 100)},
               {"degraded", degraded}};
  spdlog::info("{} queries: p50 {:.2f} ms, p95 {:.2f} ms, p99 {:.2f} ms", queries.size(),
               summary["p50_ms"].get<double>(), summary["p95_ms"].get<double>(), summary["p99_ms"].get<double>());
  if (!options.latency_out.empty()) io::write_file_atomic(options.latency_out, summary.dump(2) + "\n");
  return summary;
}

json cmd_eval(const PipelineConfig& config, const EvalOptions& options, std::string& table) {
  require_inputs({{"run", options.run}, {"examples", options.examples}});
  if (!options.scores.empty()) require_inputs({{"scores", options.scores}});
  if (!options.oracle_with.empty()) {
    if (options.scores.empty()) throw ConfigError("--oracle-with needs --scores");
    require_inputs({{"oracle-with", options.oracle_with}});
  }
  if (!options.overlap_flags.empty()) require_inputs({{"overlap-flags", options.overlap_flags}});
  for (std::size_t k : options.ks) {
    if (k < 1) throw ConfigError("k must be at least 1");
  }

  const auto examples = eval::read_examples(options.examples);
  if (examples.empty()) throw ParseError("", "examples file " + options.examples.string() + " has no examples");
  auto run = eval::read_run(options.run);
  const auto store_path = passage_store_path(config, options.passages, run);
  require_inputs({{"passages", store_path}});
  const auto store = eval::PassageStore::load(store_path);

  std::optional<std::size_t> removed;
  if (options.contamination_filter) {
    auto filtered = eval::contamination_filter(run, store, examples);
    std::size_t total = 0;
    for (const auto& [_, n] : filtered.removed) total += n;
    removed = total;
    run = std::move(filtered.run);
  }

  auto report = eval::evaluate(run, store, examples, options.ks);
  report.dataset = options.dataset;
  report.contamination_removed = removed;
  if (!options.overlap_flags.empty()) {
    const auto flagged = read_id_lines(options.overlap_flags);
    report.median_overlap_based = eval::median_overlap_based(
        run, examples, [&](std::string_view id) { return flagged.contains(std::string(id)); }, options.top_m);
  }

  std::optional<std::map<std::string, double>> scores;
  if (!options.scores.empty()) scores = eval::read_scores(options.scores);
  if (options.by_category) {
    const auto per_example = scores ? *scores
                                    : eval::aic_flags(run, store, examples,
                                                      *std::max_element(options.ks.begin(), options.ks.end()));
    report.categories = eval::breakdown_by_category(examples, per_example);
  }
  if (!options.oracle_with.empty()) {
    const auto other = eval::read_scores(options.oracle_with);
    const auto combined = eval::oracle_combine(*scores, other);
    report.oracle = eval::OracleSummary{combined.per_example.size(), eval::mean(*scores), eval::mean(other),
                                        combined.mean};
  }

  auto j = eval::to_json(report);
  table = eval::format_table(report);
  if (!options.output.empty()) io::write_file_atomic(options.output, j.dump(2) + "\n");
  return j;
}

json cmd_mine(const PipelineConfig& config, const MineOptions& options) {
  require_inputs({{"run", options.run}, {"examples", options.examples}});
  if (options.output.empty()) throw ConfigError("mine needs --output");
  const auto examples = eval::read_examples(options.examples);
  const auto run = eval::read_run(options.run);
  const auto store_path = passage_store_path(config, options.passages, run);
  require_inputs({{"passages", store_path}});
  const auto store = eval::PassageStore::load(store_path);

  auto out = open_output(options.output);
  std::size_t mined = 0;
  for (const auto& ex : examples) {
    if (!run.find(ex.id)) spdlog::warn("example '{}' is missing from the run", ex.id);
    const auto positive = eval::mine_positive(run, store, ex);
    if (!positive) continue;
    out << json{{"example_id", ex.id}, {"passage_id", positive->passage_id}, {"rank", positive->rank}}.dump() << '\n';
    ++mined;
  }
  out.close();
  if (!out) throw Error("failed writing " + options.output.string());
  spdlog::info("mined {} positive(s), {} miss(es)", mined, examples.size() - mined);
  return {{"examples", examples.size()}, {"mined", mined}, {"missed", examples.size() - mined}};
}

json cmd_stats(const PipelineConfig& config, const StatsOptions& options) {
  if (options.cluster) {
    if (!config.cluster) throw ConfigError("stats --cluster needs a \"cluster\" section in the config");
    distributed::ClusterClient client(*config.cluster);
    json shards = json::array();
    bool healthy = true;
    for (const auto& h : client.cluster_stats()) {
      json s{{"shard_id", h.shard_id}, {"healthy", h.healthy}, {"vector_count", h.vector_count}, {"epoch", h.epoch}};
      if (!h.error.empty()) s["error"] = h.error;
      healthy = healthy && h.healthy;
      shards.push_back(std::move(s));
    }
    return {{"healthy", healthy}, {"shards", shards}};
  }

  const auto passages_path = options.passages.empty() ? config.paths.passages : options.passages;
  require_inputs({{"passages", passages_path}});
  if (!options.reference.empty()) require_inputs({{"reference", options.reference}});
  if (!options.flags_out.empty() && options.reference.empty()) throw ConfigError("--flags-out needs --reference");

  const auto passages = corpus::read_passages(passages_path);
  corpus::StatsReport report;
  if (options.reference.empty()) {
    report = corpus::corpus_stats(passages);
  } else {
    const auto reference = corpus::read_passages(options.reference);
    auto ngrams = corpus::build_ngram_set(reference, config.ngram);
    ngrams.freeze();
    report = corpus::corpus_stats(passages, corpus::OverlapReference{reference, ngrams});
    if (!options.flags_out.empty()) {
      auto out = open_output(options.flags_out);
      for (std::size_t i = 0; i < passages.size(); ++i) {
        if (report.overlap->flags[i]) out << passages[i].passage_id << '\n';
      }
    }
  }
  return corpus::to_json(report);
}

}  // namespace psearch::cli
