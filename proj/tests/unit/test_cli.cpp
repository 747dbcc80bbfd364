#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli/commands.hpp"
#include "oracles.hpp"
#include "psearch/corpus/passage_io.hpp"
#include "psearch/dense/embedding.hpp"
#include "psearch/errors.hpp"

using namespace psearch;
using namespace psearch::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Pipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("psearch_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream corpus(dir_ / "corpus.jsonl");
    for (int i = 0; i < 60; ++i) {
      std::string body;
      for (int t = 0; t < 150; ++t) body += oracle::vocab_word((i * 31 + t * 7) % 300) + " ";
      corpus << json{{"id", "d" + std::to_string(i)}, {"url", "https://site.org/" + std::to_string(i)}, {"body", body}}.dump()
             << "\n";
    }
    corpus << json{{"id", "w"}, {"url", "https://en.wikipedia.org/wiki/W"}, {"body", "x"}}.dump() << "\n";
    corpus.close();
    std::ofstream queries(dir_ / "queries.jsonl");
    for (int i = 0; i < 10; ++i) {
      queries << json{{"id", "q" + std::to_string(i)}, {"text", oracle::vocab_word(i * 13) + " " + oracle::vocab_word(i)}}.dump()
              << "\n";
    }
    config_.paths.corpus = dir_ / "corpus.jsonl";
    config_.paths.passages = dir_ / "passages.jsonl";
    config_.paths.embeddings = dir_ / "emb.bin";
    config_.paths.query_embeddings = dir_ / "qemb.bin";
    config_.paths.sparse_index = dir_ / "sparse";
    config_.paths.dense_index = dir_ / "dense";
    config_.seed = 7;
    config_.hnsw.M = 8;
    config_.hnsw.ef_construction = 32;
    config_.hnsw.train_size = 20;
  }
  void TearDown() override { fs::remove_all(dir_); }

  void ingest_and_embed() {
    auto r = cmd_ingest(config_, {config_.paths.corpus, config_.paths.passages});
    EXPECT_EQ(r["accepted"].get<int>(), 60);
    EXPECT_EQ(r["passages"].get<int>(), 120);
    std::vector<dense::EmbeddingRecord> recs;
    corpus::for_each_passage(config_.paths.passages, [&](corpus::Passage&& p) {
      recs.push_back({p.passage_id, oracle::hash_encode(p.text, 32)});
    });
    dense::write_embeddings(config_.paths.embeddings, recs);
    std::vector<dense::EmbeddingRecord> qrecs;
    for (auto& q : read_queries(dir_ / "queries.jsonl")) qrecs.push_back({q.id, oracle::hash_encode(q.text, 32)});
    dense::write_embeddings(config_.paths.query_embeddings, qrecs);
  }

  fs::path dir_;
  PipelineConfig config_;
};

}  // namespace

TEST(Config, JsonRoundTrip) {
  PipelineConfig c;
  c.paths.passages = "/x/p.jsonl";
  c.chunk_window = 64;
  c.bm25.k1 = 1.2;
  c.dense_mode = dense::DenseMode::flat_exact;
  c.seed = 3;
  c.filter.accepted_tiers = {corpus::Tier::head};
  distributed::ClusterConfig cluster;
  cluster.servers = {{"127.0.0.1", 7100}};
  c.cluster = cluster;
  auto path = fs::temp_directory_path() / "psearch_config_rt.json";
  c.save(path);
  EXPECT_EQ(PipelineConfig::load(path), c);
  fs::remove(path);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  auto path = fs::temp_directory_path() / "psearch_config_bad.json";
  std::ofstream(path) << R"({"bm25": {"k1": -1}})";
  EXPECT_THROW(PipelineConfig::load(path), ConfigError);
  std::ofstream(path) << R"({"chunk_window": "wide"})";
  EXPECT_THROW(PipelineConfig::load(path), ConfigError);
  std::ofstream(path) << "{not json";
  EXPECT_THROW(PipelineConfig::load(path), ConfigError);
  fs::remove(path);
}

TEST(ExitCodes, MapExceptionClasses) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(ParseError("f", "x", 3)), kInputError);
  EXPECT_EQ(exit_code_for(BuildError("x")), kRuntimeError);
  EXPECT_EQ(exit_code_for(TransportError("x", 1)), kRuntimeError);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kRuntimeError);
}

TEST(RequireInputs, ListsEveryMissingPath) {
  try {
    require_inputs({{"passages", ""}, {"run", "/nonexistent/run.tsv"}});
    FAIL();
  } catch (const ConfigError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("passages"), std::string::npos);
    EXPECT_NE(what.find("/nonexistent/run.tsv"), std::string::npos);
  }
}

TEST(Percentile, NearestRank) {
  EXPECT_EQ(percentile({}, 95), 0.0);
  std::vector<double> s;
  for (int i = 100; i >= 1; --i) s.push_back(i);
  EXPECT_EQ(percentile(s, 95), 95.0);
  EXPECT_EQ(percentile(s, 50), 50.0);
  EXPECT_EQ(percentile(s, 100), 100.0);
}

TEST_F(Pipeline, IngestReportsSkipsAndMalformedLines) {
  std::ofstream(config_.paths.corpus, std::ios::app) << "{broken\n";
  EXPECT_THROW(cmd_ingest(config_, {config_.paths.corpus, config_.paths.passages}), ParseError);
  config_.error_budget = 1;
  auto r = cmd_ingest(config_, {config_.paths.corpus, config_.paths.passages});
  EXPECT_EQ(r["malformed"].get<int>(), 1);
  EXPECT_EQ(r["skipped"]["url_excluded"].get<int>(), 1);
}

TEST_F(Pipeline, BuildsAreDeterministic) {
  ingest_and_embed();
  auto first = cmd_build(config_, {});
  auto sparse_hash = content_hash(config_.paths.sparse_index);
  auto dense_hash = content_hash(config_.paths.dense_index);
  auto manifest = json::parse(slurp(config_.paths.dense_index / "manifest.json"));
  EXPECT_EQ(manifest["content_hash"], dense_hash);
  EXPECT_EQ(manifest["count"].get<int>(), 120);
  cmd_build(config_, {});
  EXPECT_EQ(content_hash(config_.paths.sparse_index), sparse_hash);
  EXPECT_EQ(content_hash(config_.paths.dense_index), dense_hash);
  config_.seed = 8;
  cmd_build(config_, {BuildWhich::dense});
  EXPECT_NE(content_hash(config_.paths.dense_index), dense_hash);
}

TEST_F(Pipeline, DenseBuildRequiresSeed) {
  ingest_and_embed();
  config_.seed.reset();
  EXPECT_THROW(cmd_build(config_, {BuildWhich::dense}), ConfigError);
  EXPECT_FALSE(fs::exists(config_.paths.dense_index));
}

TEST_F(Pipeline, QueriesProduceIdenticalRunsAndEvaluate) {
  ingest_and_embed();
  cmd_build(config_, {});
  for (auto backend : {Backend::sparse, Backend::dense}) {
    QueryOptions q{dir_ / "queries.jsonl", dir_ / "run1.tsv", 20, backend, std::nullopt, dir_ / "lat.json"};
    auto stats = cmd_query(config_, q);
    EXPECT_EQ(stats["queries"].get<int>(), 10);
    q.output = dir_ / "run2.tsv";
    cmd_query(config_, q);
    EXPECT_EQ(slurp(dir_ / "run1.tsv"), slurp(dir_ / "run2.tsv"));
    EXPECT_TRUE(json::parse(slurp(dir_ / "lat.json")).contains("p95_ms"));
  }

  std::ofstream examples(dir_ / "examples.jsonl");
  for (int i = 0; i < 10; ++i) {
    examples << json{{"id", "q" + std::to_string(i)}, {"input", "x"}, {"answers", {oracle::vocab_word(i * 13)}}}.dump()
             << "\n";
  }
  examples.close();
  EvalOptions e;
  e.run = dir_ / "run1.tsv";
  e.examples = dir_ / "examples.jsonl";
  e.output = dir_ / "report.json";
  std::string table;
  auto report = cmd_eval(config_, e, table);
  EXPECT_TRUE(report["AIC"].contains("20"));
  EXPECT_FALSE(table.empty());
  EXPECT_TRUE(fs::exists(e.output));

  auto mined = cmd_mine(config_, {dir_ / "run1.tsv", dir_ / "examples.jsonl", {}, dir_ / "mined.jsonl"});
  EXPECT_EQ(mined["examples"].get<int>(), 10);
  EXPECT_EQ(mined["mined"].get<int>() + mined["missed"].get<int>(), 10);
}

TEST_F(Pipeline, EmptyExamplesFileIsAnInputError) {
  ingest_and_embed();
  cmd_build(config_, {BuildWhich::sparse});
  cmd_query(config_, {dir_ / "queries.jsonl", dir_ / "run.tsv", 5, Backend::sparse, std::nullopt, {}});
  std::ofstream(dir_ / "empty.jsonl").close();
  EvalOptions e;
  e.run = dir_ / "run.tsv";
  e.examples = dir_ / "empty.jsonl";
  std::string table;
  EXPECT_THROW(cmd_eval(config_, e, table), ParseError);
}
