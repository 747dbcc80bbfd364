#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "psearch/distributed/protocol.hpp"
#include "psearch/distributed/shard.hpp"

namespace psearch::distributed {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Cluster layout. Server i owns logical shards
/// [i * logical_shards_per_server, (i + 1) * logical_shards_per_server).
///
/// JSON schema:
///   {
///     "servers": [{"host": "127.0.0.1", "port": 7001}, ...],   // required, non-empty
///     "logical_shards_per_server": 2,
///     "request_timeout_ms": 5000,
///     "partial_results_allowed": false,
///     "binary_vectors": true,
///     "dense_mode": "hnsw_sq8" | "flat_exact",
///     "hnsw": {"M": 32, "ef_construction": 128, "ef_search": 128,
///              "seed": 24301, "train_size": 100000},
///     "bm25": {"k1": 0.9, "b": 0.4}
///   }
struct ClusterConfig {
  std::vector<Endpoint> servers;
  std::size_t logical_shards_per_server = 2;
  std::chrono::milliseconds request_timeout{5000};
  bool partial_results_allowed = false;
  bool binary_vectors = true;
  ShardConfig shard;

  std::size_t total_shards() const noexcept { return servers.size() * logical_shards_per_server; }
  std::size_t server_of(std::uint32_t shard_id) const noexcept { return shard_id / logical_shards_per_server; }
  std::vector<std::uint32_t> shards_of(std::size_t server) const;

  void validate() const;
  static ClusterConfig load(const std::filesystem::path& path);
  friend bool operator==(const ClusterConfig&, const ClusterConfig&);
};

void to_json(nlohmann::json& j, const ClusterConfig& c);
void from_json(const nlohmann::json& j, ClusterConfig& c);

/// Chooses the target shard for an add batch: the shard with the fewest
/// vectors, ties by lowest shard id. Keeps the max - min spread within the
/// largest batch committed.
class BalancedRouter {
 public:
  explicit BalancedRouter(std::vector<std::uint64_t> counts) : counts_(std::move(counts)) {}

  /// All shards, most preferred first: (count asc, shard_id asc).
  std::vector<std::uint32_t> preference() const;
  void commit(std::uint32_t shard, std::uint64_t added) { counts_.at(shard) += added; }
  void release(std::uint32_t shard, std::uint64_t removed) { counts_.at(shard) -= removed; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
};

struct ScatterResponse {
  std::vector<SearchResult> results;
  bool degraded = false;
  std::vector<std::uint32_t> missing_shards;
  std::map<std::uint32_t, std::uint64_t> epochs;  // epoch each shard served from
};

struct ShardHealth {
  std::uint32_t shard_id = 0;
  bool healthy = false;
  std::uint64_t vector_count = 0;
  std::uint64_t epoch = 0;
  std::string error;
};

/// Client side of the index service. Safe to share across threads.
class ClusterClient {
 public:
  explicit ClusterClient(ClusterConfig config);
  ~ClusterClient();

  const ClusterConfig& config() const noexcept { return config_; }

  /// Sends the batch to the least-filled shard, falling back to the next
  /// candidates when a shard is unreachable. Returns the shard id.
  /// Throws BuildError when the server rejects the batch, TransportError
  /// when every shard is unreachable.
  std::uint32_t route_add(const AddBatch& batch);

  /// Queries every server concurrently for its shards' local top-k and
  /// merges them. Text queries first gather collection statistics so
  /// BM25 scores are computed over the whole cluster.
  ScatterResponse scatter_search(const Query& query, std::size_t k,
                                 std::optional<std::size_t> ef_search = std::nullopt);

  /// Never throws for unreachable shards; they are reported unhealthy.
  std::vector<ShardHealth> cluster_stats();

 private:
  struct Pool;
  nlohmann::json call(std::size_t server, const nlohmann::json& request, const std::vector<float>* floats);
  nlohmann::json call_once(std::size_t server, Frame& frame, Deadline deadline, bool pooled_ok);
  std::vector<ShardStats> gather_stats(const std::vector<std::string>& terms, std::vector<std::size_t>& failed,
                                       std::vector<std::string>& errors);
  [[noreturn]] void fail_shards(std::size_t server, const std::string& what) const;

  ClusterConfig config_;
  std::vector<std::unique_ptr<Pool>> pools_;
  std::mutex router_mu_;
  std::optional<BalancedRouter> router_;
  std::atomic<std::uint64_t> next_request_id_{1};
};

}  // namespace psearch::distributed
