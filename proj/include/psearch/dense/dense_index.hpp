#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psearch/dense/embedding.hpp"
#include "psearch/dense/quantizer.hpp"
#include "psearch/types.hpp"

namespace psearch::dense {

enum class DenseMode { flat_exact, hnsw_sq8 };

std::string_view to_string(DenseMode mode);
DenseMode parse_dense_mode(std::string_view name);

struct HnswParams {
  std::size_t M = 32;                // max neighbors per node on layers >= 1; 2M on layer 0
  std::size_t ef_construction = 128;
  std::size_t ef_search = 128;
  std::uint64_t seed = 0x5EED;       // level assignment
  std::size_t train_size = 100000;   // vectors buffered before the quantizer is trained

  double level_multiplier() const;
  void validate() const;
  friend bool operator==(const HnswParams&, const HnswParams&) = default;
};

/// Inner-product nearest neighbor index over passage embeddings.
///
/// flat_exact keeps raw float vectors and answers by exhaustive scan.
/// hnsw_sq8 buffers raw vectors until `train_size` have arrived (or
/// finalize() is called), trains an 8-bit scalar quantizer on that prefix,
/// then stores codes and links every vector into an HNSW graph. Graph
/// traversal scores against dequantized vectors. Until training the index
/// answers by exhaustive scan over the buffered raw vectors.
///
/// A new node links to M neighbors chosen by the diversity heuristic and
/// each neighbor links back; a list that overflows its cap (2M on layer 0,
/// M above) is re-pruned with the same heuristic. Neighbor lists are
/// stored in ascending ordinal order, which fixes traversal order across
/// save/load.
///
/// Single writer. Concurrent const calls (search, accessors) are safe
/// when no writer is active.
class DenseIndex {
 public:
  DenseIndex(std::size_t dim, DenseMode mode, HnswParams params = {});

  /// Validates the whole batch (dimension, finiteness, duplicate ids)
  /// before mutating, so a rejected batch leaves the index unchanged.
  void add_batch(std::span<const EmbeddingRecord> batch);
  void add(std::string_view id, std::span<const float> values);

  /// hnsw_sq8: trains on whatever is buffered if training has not happened.
  void finalize();

  /// Top-k by inner product, ordered (score desc, passage_id asc).
  /// `ef_search` overrides the configured value; the effective candidate
  /// list size is max(ef_search, k).
  std::vector<SearchResult> search(std::span<const float> query, std::size_t k,
                                   std::optional<std::size_t> ef_search = std::nullopt) const;

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  DenseMode mode() const noexcept { return mode_; }
  const HnswParams& params() const noexcept { return params_; }
  bool contains(std::string_view id) const;
  const std::string& passage_id(std::uint32_t ordinal) const { return ids_.at(ordinal); }

  /// True once vectors are held as codes (hnsw_sq8 after training).
  bool quantized() const noexcept { return quantized_; }
  const ScalarQuantizer* quantizer() const noexcept { return quantized_ ? &quantizer_ : nullptr; }
  /// The vector used for scoring: raw, or dequantized when quantized().
  std::span<const float> vector(std::uint32_t ordinal) const;

  // Graph introspection (hnsw_sq8 after training).
  std::optional<std::uint32_t> entry_point() const noexcept { return entry_; }
  int max_level() const noexcept { return max_level_; }
  int level(std::uint32_t ordinal) const { return levels_.at(ordinal); }
  std::span<const std::uint32_t> neighbors(std::uint32_t ordinal, int level) const;
  /// Serialized adjacency: byte-identical for identical graphs.
  std::string graph_bytes() const;

  /// Directory layout: meta.json, ids.bin, vectors.bin | codes.bin +
  /// quantizer.bin, graph.bin.
  void save(const std::filesystem::path& dir) const;
  static DenseIndex load(const std::filesystem::path& dir);

  static constexpr std::uint32_t kFormatVersion = 1;

 private:
  struct Candidate {
    float sim;
    std::uint32_t id;
  };

  int draw_level(std::uint32_t ordinal) const;
  void train_and_link();
  void link(std::uint32_t node);
  std::vector<Candidate> search_layer(std::span<const float> q, std::uint32_t entry, float entry_sim,
                                      std::size_t ef, int level) const;
  std::uint32_t greedy_descend(std::span<const float> q, int down_to_level, float& sim) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate>& candidates, std::size_t limit) const;
  void connect(std::uint32_t node, std::uint32_t added, int level);
  std::size_t max_degree(int level) const noexcept { return level == 0 ? 2 * params_.M : params_.M; }
  std::vector<SearchResult> exhaustive(std::span<const float> query, std::size_t k) const;

  std::size_t dim_;
  DenseMode mode_;
  HnswParams params_;

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  std::vector<float> raw_;     // flat mode, or hnsw before training
  bool quantized_ = false;
  ScalarQuantizer quantizer_;
  std::vector<std::uint8_t> codes_;
  std::vector<float> recon_;   // dequantized codes

  std::vector<std::uint8_t> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] ascending
  std::optional<std::uint32_t> entry_;
  int max_level_ = -1;
};

/// Builds an index over `embeddings` (and finalizes it).
DenseIndex build_dense(std::span<const EmbeddingRecord> embeddings, DenseMode mode, HnswParams params = {});

float inner_product(std::span<const float> a, std::span<const float> b) noexcept;

}  // namespace psearch::dense
