#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "oracles.hpp"
#include "psearch/distributed/cluster.hpp"
#include "psearch/distributed/merge.hpp"
#include "psearch/distributed/server.hpp"
#include "psearch/errors.hpp"

using namespace psearch;
using namespace psearch::distributed;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

AddBatch make_batch(std::size_t from, std::size_t n, std::size_t dim, std::uint64_t seed) {
  auto rows = oracle::gaussian_rows(n, dim, seed);
  AddBatch batch;
  for (std::size_t i = 0; i < n; ++i) {
    BatchItem item;
    item.passage_id = "p" + std::to_string(from + i);
    item.text = oracle::vocab_word(i % 17) + " " + oracle::vocab_word((i * 7) % 23) + " " +
                oracle::vocab_word((from + i) % 5);
    item.vector.assign(rows.begin() + i * dim, rows.begin() + (i + 1) * dim);
    batch.push_back(std::move(item));
  }
  return batch;
}

ShardConfig flat_config() {
  ShardConfig c;
  c.dense_mode = dense::DenseMode::flat_exact;
  return c;
}

}  // namespace

TEST(Merge, OrdersByScoreThenShardThenId) {
  std::vector<std::vector<SearchResult>> lists{
      {{"b", 0.9, 1, 1}, {"z", 0.5, 2, 1}},
      {{"a", 0.9, 1, 0}, {"c", 0.7, 2, 0}},
      {{"a2", 0.9, 1, 0}},
  };
  auto merged = merge_topk(lists, 4);
  ASSERT_EQ(merged.size(), 4u);
  EXPECT_EQ(merged[0].passage_id, "a");
  EXPECT_EQ(merged[1].passage_id, "a2");
  EXPECT_EQ(merged[2].passage_id, "b");
  EXPECT_EQ(merged[3].passage_id, "c");
  for (std::uint32_t r = 0; r < 4; ++r) EXPECT_EQ(merged[r].rank, r + 1);
  EXPECT_TRUE(merge_topk({}, 5).empty());
}

TEST(Merge, EqualsSortOfUnion) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<SearchResult>> lists(1 + rng() % 6);
    std::vector<SearchResult> all;
    int next = 0;
    for (std::uint32_t s = 0; s < lists.size(); ++s) {
      for (std::size_t i = 0, n = rng() % 30; i < n; ++i) {
        lists[s].push_back({"p" + std::to_string(next++), static_cast<double>(rng() % 10), 0, s});
      }
      std::sort(lists[s].begin(), lists[s].end(), [](auto& a, auto& b) {
        return a.score != b.score ? a.score > b.score : a.passage_id < b.passage_id;
      });
      all.insert(all.end(), lists[s].begin(), lists[s].end());
    }
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.shard_id != b.shard_id) return a.shard_id < b.shard_id;
      return a.passage_id < b.passage_id;
    });
    const std::size_t k = 1 + rng() % 50;
    auto merged = merge_topk(lists, k);
    ASSERT_EQ(merged.size(), std::min(k, all.size()));
    for (std::size_t i = 0; i < merged.size(); ++i) EXPECT_EQ(merged[i].passage_id, all[i].passage_id);
  }
}

TEST(Router, PrefersFewestThenLowestId) {
  BalancedRouter r({5, 2, 2, 9});
  EXPECT_EQ(r.preference(), (std::vector<std::uint32_t>{1, 2, 0, 3}));
  r.commit(1, 10);
  EXPECT_EQ(r.preference().front(), 2u);
}

TEST(Router, SpreadBoundedByLargestBatch) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    BalancedRouter r(std::vector<std::uint64_t>(1 + rng() % 8, 0));
    std::uint64_t largest = 0;
    for (int b = 0; b < 200; ++b) {
      std::uint64_t size = 1 + rng() % 100;
      largest = std::max(largest, size);
      r.commit(r.preference().front(), size);
      auto [lo, hi] = std::minmax_element(r.counts().begin(), r.counts().end());
      ASSERT_LE(*hi - *lo, largest);
    }
  }
}

TEST(Protocol, FrameRoundTrip) {
  Frame json_frame{FrameType::json, {{"op", "stats"}, {"request_id", 7}}, {}};
  auto bytes = encode_frame(json_frame);
  auto back = decode_frame(FrameType::json, std::string_view(bytes).substr(5));
  EXPECT_EQ(back.header, json_frame.header);

  Frame bin{FrameType::binary, {{"op", "search"}}, {1.5f, -2.0f, 0.25f}};
  bytes = encode_frame(bin);
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[4]), 1);
  back = decode_frame(FrameType::binary, std::string_view(bytes).substr(5));
  EXPECT_EQ(back.header, bin.header);
  EXPECT_EQ(back.floats, bin.floats);
}

TEST(Protocol, MalformedBodiesAreParseErrors) {
  EXPECT_THROW(decode_frame(FrameType::json, "{not json"), ParseError);
  EXPECT_THROW(decode_frame(FrameType::binary, "ab"), ParseError);
  std::string body("\x02\x00\x00\x00{}\x01\x02", 8);
  EXPECT_THROW(decode_frame(FrameType::binary, body), ParseError);
}

TEST(BatchCodec, RoundTrip) {
  auto batch = make_batch(0, 5, 4, 3);
  batch[2].title = "T";
  auto [epoch, back] = decode_batch(encode_batch(42, batch));
  EXPECT_EQ(epoch, 42u);
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back[i].passage_id, batch[i].passage_id);
    EXPECT_EQ(back[i].title, batch[i].title);
    EXPECT_EQ(back[i].text, batch[i].text);
    EXPECT_EQ(back[i].vector, batch[i].vector);
  }
}

TEST(Shard, EpochsAndDuplicates) {
  auto dir = temp_dir("psearch_shard_epochs");
  Shard s(0, dir, flat_config());
  EXPECT_EQ(s.epoch(), 0u);
  EXPECT_EQ(s.add_batch({}), 0u);
  EXPECT_EQ(s.add_batch(make_batch(0, 10, 4, 1)), 1u);
  EXPECT_THROW(s.add_batch(make_batch(5, 10, 4, 2)), BuildError);
  EXPECT_EQ(s.epoch(), 1u);
  EXPECT_EQ(s.vector_count(), 10u);
  auto dup = make_batch(20, 2, 4, 3);
  dup[1].passage_id = dup[0].passage_id;
  EXPECT_THROW(s.add_batch(dup), BuildError);
  EXPECT_EQ(s.vector_count(), 10u);
  std::filesystem::remove_all(dir);
}

TEST(Shard, ReplayRestoresIdenticalState) {
  auto dir = temp_dir("psearch_shard_replay");
  auto q = oracle::gaussian_rows(1, 8, 99);
  ShardSearchResult before, text_before;
  {
    Shard s(3, dir, flat_config());
    for (int b = 0; b < 4; ++b) s.add_batch(make_batch(b * 25, 25, 8, 10 + b));
    before = s.search(q, 10, std::nullopt);
    text_before = s.search(std::string(oracle::vocab_word(3)), 10, std::nullopt);
  }
  Shard reopened(3, dir, flat_config());
  EXPECT_EQ(reopened.epoch(), 4u);
  EXPECT_EQ(reopened.search(q, 10, std::nullopt).results, before.results);
  EXPECT_EQ(reopened.search(std::string(oracle::vocab_word(3)), 10, std::nullopt).results, text_before.results);
  std::filesystem::remove_all(dir);
}

TEST(Shard, TornTailIsDiscarded) {
  auto dir = temp_dir("psearch_shard_torn");
  {
    Shard s(0, dir, flat_config());
    s.add_batch(make_batch(0, 10, 4, 1));
    s.add_batch(make_batch(10, 10, 4, 2));
  }
  auto log = dir / "batches.log";
  auto size = std::filesystem::file_size(log);
  std::filesystem::resize_file(log, size - 7);
  {
    Shard s(0, dir, flat_config());
    EXPECT_EQ(s.epoch(), 1u);
    EXPECT_EQ(s.vector_count(), 10u);
    EXPECT_EQ(s.add_batch(make_batch(10, 10, 4, 2)), 2u);
  }
  Shard s(0, dir, flat_config());
  EXPECT_EQ(s.epoch(), 2u);
  EXPECT_EQ(s.vector_count(), 20u);
  std::filesystem::remove_all(dir);
}

TEST(Shard, SnapshotThenMoreBatches) {
  auto dir = temp_dir("psearch_shard_snap");
  auto q = oracle::gaussian_rows(1, 6, 5);
  ShardSearchResult before;
  {
    Shard s(1, dir, flat_config());
    s.add_batch(make_batch(0, 30, 6, 1));
    s.snapshot();
    EXPECT_EQ(std::filesystem::file_size(dir / "batches.log"), 0u);
    s.add_batch(make_batch(30, 30, 6, 2));
    before = s.search(q, 15, std::nullopt);
  }
  Shard s(1, dir, flat_config());
  EXPECT_EQ(s.epoch(), 2u);
  EXPECT_EQ(s.search(q, 15, std::nullopt).results, before.results);
  std::filesystem::remove_all(dir);
}

TEST(ClusterConfig, JsonRoundTripAndValidation) {
  ClusterConfig c;
  c.servers = {{"127.0.0.1", 7001}, {"10.0.0.2", 7002}};
  c.logical_shards_per_server = 3;
  c.partial_results_allowed = true;
  c.shard.hnsw.M = 16;
  nlohmann::json j = c;
  EXPECT_EQ(j.get<ClusterConfig>(), c);
  EXPECT_EQ(c.total_shards(), 6u);
  EXPECT_EQ(c.server_of(4), 1u);
  EXPECT_EQ(c.shards_of(1), (std::vector<std::uint32_t>{3, 4, 5}));
  ClusterConfig empty;
  EXPECT_THROW(empty.validate(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"servers", nlohmann::json::array()}}).get<ClusterConfig>().validate(), ConfigError);
}

class InProcessCluster : public ::testing::Test {
 protected:
  void start(std::size_t servers, std::size_t per_server, bool partial) {
    root_ = temp_dir("psearch_cluster");
    config_.logical_shards_per_server = per_server;
    config_.partial_results_allowed = partial;
    config_.request_timeout = std::chrono::milliseconds(3000);
    config_.shard = flat_config();
    for (std::size_t s = 0; s < servers; ++s) {
      ServerOptions o;
      o.data_dir = root_;
      o.shard = config_.shard;
      for (std::size_t i = 0; i < per_server; ++i) o.shard_ids.push_back(static_cast<std::uint32_t>(s * per_server + i));
      servers_.push_back(std::make_unique<IndexServer>(o));
      servers_.back()->start();
      config_.servers.push_back({"127.0.0.1", servers_.back()->port()});
    }
  }
  void TearDown() override {
    for (auto& s : servers_) s->stop(false);
    servers_.clear();
    std::filesystem::remove_all(root_);
  }

  std::filesystem::path root_;
  ClusterConfig config_;
  std::vector<std::unique_ptr<IndexServer>> servers_;
};

TEST_F(InProcessCluster, ScatterEqualsSingleIndex) {
  start(2, 2, false);
  ClusterClient client(config_);
  const std::size_t dim = 8;
  std::vector<dense::EmbeddingRecord> all;
  sparse::SparseIndex whole;
  for (int b = 0; b < 12; ++b) {
    auto batch = make_batch(b * 50, 50, dim, 100 + b);
    client.route_add(batch);
    for (auto& item : batch) {
      all.push_back({item.passage_id, item.vector});
      whole.add(item.passage_id, item.text);
    }
  }
  auto health = client.cluster_stats();
  ASSERT_EQ(health.size(), 4u);
  std::uint64_t total = 0;
  for (auto& h : health) {
    EXPECT_TRUE(h.healthy);
    total += h.vector_count;
  }
  EXPECT_EQ(total, 600u);

  auto flat = dense::build_dense(all, dense::DenseMode::flat_exact);
  auto queries = oracle::gaussian_rows(20, dim, 7);
  for (int i = 0; i < 20; ++i) {
    std::vector<float> q(queries.begin() + i * dim, queries.begin() + (i + 1) * dim);
    auto got = client.scatter_search(q, 20);
    auto expected = flat.search(q, 20);
    EXPECT_FALSE(got.degraded);
    ASSERT_EQ(got.results.size(), expected.size());
    for (std::size_t r = 0; r < expected.size(); ++r) {
      EXPECT_EQ(got.results[r].passage_id, expected[r].passage_id);
      EXPECT_NEAR(got.results[r].score, expected[r].score, 1e-6);
    }
  }
  for (int w = 0; w < 5; ++w) {
    std::string text = oracle::vocab_word(w) + " " + oracle::vocab_word(w + 9);
    auto got = client.scatter_search(text, 30);
    auto expected = whole.search(text, 30);
    ASSERT_EQ(got.results.size(), expected.size());
    for (std::size_t r = 0; r < expected.size(); ++r) {
      EXPECT_EQ(got.results[r].score, expected[r].score);
    }
  }
}

TEST_F(InProcessCluster, DownServerFailsOrDegrades) {
  start(2, 1, false);
  {
    ClusterClient client(config_);
    client.route_add(make_batch(0, 10, 4, 1));
    client.route_add(make_batch(10, 10, 4, 2));
  }
  servers_[1]->stop(false);
  auto q = oracle::gaussian_rows(1, 4, 3);
  {
    ClusterClient strict(config_);
    try {
      strict.scatter_search(q, 5);
      FAIL();
    } catch (const TransportError& e) {
      EXPECT_EQ(e.shard_id(), 1);
    }
  }
  config_.partial_results_allowed = true;
  ClusterClient lenient(config_);
  auto r = lenient.scatter_search(q, 5);
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.missing_shards, (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(r.results.size(), 5u);
  auto health = lenient.cluster_stats();
  EXPECT_TRUE(health[0].healthy);
  EXPECT_FALSE(health[1].healthy);
}

TEST_F(InProcessCluster, RestartFromSnapshotAnswersIdentically) {
  start(1, 2, false);
  auto q = oracle::gaussian_rows(1, 4, 3);
  ScatterResponse before;
  {
    ClusterClient client(config_);
    for (int b = 0; b < 6; ++b) client.route_add(make_batch(b * 10, 10, 4, b));
    before = client.scatter_search(q, 20);
  }
  ServerOptions o;
  o.data_dir = root_;
  o.shard = config_.shard;
  o.shard_ids = {0, 1};
  servers_[0]->stop(true);
  servers_.clear();
  servers_.push_back(std::make_unique<IndexServer>(o));
  servers_[0]->start();
  config_.servers = {{"127.0.0.1", servers_[0]->port()}};
  ClusterClient client(config_);
  auto after = client.scatter_search(q, 20);
  EXPECT_EQ(after.results, before.results);
  EXPECT_EQ(after.epochs, before.epochs);
}
