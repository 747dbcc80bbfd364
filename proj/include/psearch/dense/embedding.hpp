#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace psearch::dense {

/// Externally produced passage (or query) embedding.
struct EmbeddingRecord {
  std::string id;
  std::vector<float> values;
};

inline constexpr std::size_t kDefaultDim = 768;

/// Throws ConfigError on empty or non-finite vectors.
void check_finite(std::span<const float> v);

/// Binary embedding file, little-endian:
///   header  u32 magic "PSEM" | u32 version | u64 count | u32 dim
///   record  u32 id length | id bytes (UTF-8) | dim x f32
class EmbeddingWriter {
 public:
  EmbeddingWriter(const std::filesystem::path& path, std::uint32_t dim);
  ~EmbeddingWriter();
  EmbeddingWriter(const EmbeddingWriter&) = delete;
  EmbeddingWriter& operator=(const EmbeddingWriter&) = delete;

  void write(std::string_view id, std::span<const float> values);
  /// Patches the record count into the header. Called by the destructor.
  void close();

 private:
  std::ofstream out_;
  std::uint32_t dim_;
  std::uint64_t count_ = 0;
  bool closed_ = false;
};

class EmbeddingReader {
 public:
  explicit EmbeddingReader(const std::filesystem::path& path);

  std::uint64_t count() const noexcept { return count_; }
  std::uint32_t dim() const noexcept { return dim_; }
  /// False once all records are consumed. Throws FormatError on truncation.
  bool next(EmbeddingRecord& record);

 private:
  std::ifstream in_;
  std::filesystem::path path_;
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
  std::uint32_t dim_ = 0;
};

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records);

inline constexpr std::uint32_t kEmbeddingMagic = 0x4D455350;  // "PSEM"
inline constexpr std::uint32_t kEmbeddingVersion = 1;

}  // namespace psearch::dense
