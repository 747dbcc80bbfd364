#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "psearch/dense/dense_index.hpp"
#include "psearch/sparse/bm25_index.hpp"
#include "psearch/types.hpp"

namespace psearch::distributed {

/// Index settings every shard of a cluster shares.
struct ShardConfig {
  dense::DenseMode dense_mode = dense::DenseMode::hnsw_sq8;
  dense::HnswParams hnsw;
  sparse::BM25Params bm25;
};

/// One passage sent for indexing. `vector` may be empty for a sparse-only
/// shard; a shard's first non-empty batch fixes whether it holds vectors.
struct BatchItem {
  std::string passage_id;
  std::string title;
  std::string text;
  std::vector<float> vector;
};

using AddBatch = std::vector<BatchItem>;

/// A query is either an embedding or raw text.
using Query = std::variant<std::vector<float>, std::string>;

struct ShardSearchResult {
  std::uint32_t shard_id = 0;
  std::uint64_t epoch = 0;
  std::vector<SearchResult> results;
};

struct ShardStats {
  std::uint32_t shard_id = 0;
  std::uint64_t vector_count = 0;
  std::uint64_t epoch = 0;
  bool has_vectors = false;
  std::size_t dim = 0;
  sparse::CollectionStats collection;
};

/// One logical index partition.
///
/// Add batches are serialized and made durable in an append-only batch log
/// (length + CRC32 framed, fsync'd) before they become visible. A batch is
/// applied under an exclusive lock and searches hold a shared lock, so a
/// search observes either none or all of a batch together with the epoch
/// it saw. Reopening a shard loads its last snapshot (written on clean
/// shutdown) and replays later log records; index construction is
/// deterministic, so a replayed shard answers queries identically.
class Shard {
 public:
  Shard(std::uint32_t shard_id, std::filesystem::path dir, ShardConfig config);
  ~Shard();
  Shard(const Shard&) = delete;
  Shard& operator=(const Shard&) = delete;

  std::uint32_t id() const noexcept { return id_; }

  /// Commits a batch and returns the new epoch. An empty batch succeeds
  /// without changing the epoch. Duplicate ids (within the batch or
  /// against the shard) reject the whole batch with BuildError.
  std::uint64_t add_batch(const AddBatch& batch);

  /// `global` supplies collection-wide BM25 statistics for text queries.
  ShardSearchResult search(const Query& query, std::size_t k, std::optional<std::size_t> ef_search,
                           const sparse::CollectionStats* global = nullptr) const;

  ShardStats stats(std::span<const std::string> terms = {}) const;

  std::uint64_t epoch() const;
  std::uint64_t vector_count() const;

  /// Persists indices and epoch, then truncates the batch log.
  void snapshot();

 private:
  void open();
  void apply(const AddBatch& batch);
  void append_log(std::uint64_t epoch, const AddBatch& batch);

  std::uint32_t id_;
  std::filesystem::path dir_;
  ShardConfig config_;

  std::mutex add_mu_;
  mutable std::shared_mutex state_mu_;
  sparse::SparseIndex sparse_;
  std::unique_ptr<dense::DenseIndex> dense_;
  std::optional<bool> has_vectors_;
  std::uint64_t epoch_ = 0;
  int log_fd_ = -1;
};

std::string encode_batch(std::uint64_t epoch, const AddBatch& batch);
std::pair<std::uint64_t, AddBatch> decode_batch(std::string_view payload);

}  // namespace psearch::distributed
