#include "psearch/dense/embedding.hpp"

#include <cmath>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"

namespace psearch::dense {

void check_finite(std::span<const float> v) {
  if (v.empty()) throw ConfigError("embedding has no dimensions");
  for (float x : v) {
    if (!std::isfinite(x)) throw ConfigError("embedding contains a non-finite value");
  }
}

EmbeddingWriter::EmbeddingWriter(const std::filesystem::path& path, std::uint32_t dim)
    : out_(path, std::ios::binary | std::ios::trunc), dim_(dim) {
  if (!out_) throw Error("cannot write embeddings to " + path.string());
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  io::Writer header;
  header.put(kEmbeddingMagic);
  header.put(kEmbeddingVersion);
  header.put<std::uint64_t>(0);
  header.put(dim_);
  out_.write(header.data().data(), static_cast<std::streamsize>(header.data().size()));
}

EmbeddingWriter::~EmbeddingWriter() {
  try {
    close();
  } catch (...) {
  }
}

void EmbeddingWriter::write(std::string_view id, std::span<const float> values) {
  if (values.size() != dim_) throw DimensionMismatch(dim_, values.size());
  io::Writer rec;
  rec.put_string(id);
  rec.put_floats(values);
  out_.write(rec.data().data(), static_cast<std::streamsize>(rec.data().size()));
  ++count_;
}

void EmbeddingWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(8);
  out_.write(reinterpret_cast<const char*>(&count_), sizeof count_);
  out_.close();
  if (out_.fail()) throw Error("failed writing embedding file");
}

EmbeddingReader::EmbeddingReader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw Error("cannot open embeddings file " + path.string());
  char header[20];
  if (!in_.read(header, sizeof header)) throw FormatError("embedding file too short: " + path.string());
  io::Reader r(std::string_view(header, sizeof header));
  if (r.get<std::uint32_t>() != kEmbeddingMagic) throw FormatError("bad embedding file magic: " + path.string());
  auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion) {
    throw FormatError("embedding file version " + std::to_string(version) + " is not supported");
  }
  count_ = r.get<std::uint64_t>();
  dim_ = r.get<std::uint32_t>();
  if (dim_ == 0) throw FormatError("embedding file declares dimension 0");
}

bool EmbeddingReader::next(EmbeddingRecord& record) {
  if (read_ == count_) return false;
  std::uint32_t len = 0;
  if (!in_.read(reinterpret_cast<char*>(&len), sizeof len)) throw FormatError("truncated embedding record");
  record.id.resize(len);
  record.values.resize(dim_);
  if (!in_.read(record.id.data(), len) ||
      !in_.read(reinterpret_cast<char*>(record.values.data()),
                static_cast<std::streamsize>(dim_ * sizeof(float)))) {
    throw FormatError("truncated embedding record " + std::to_string(read_) + " in " + path_.string());
  }
  ++read_;
  return true;
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  EmbeddingReader reader(path);
  std::vector<EmbeddingRecord> out;
  out.reserve(reader.count());
  EmbeddingRecord rec;
  while (reader.next(rec)) out.push_back(std::move(rec));
  return out;
}

void write_embeddings(const std::filesystem::path& path, std::span<const EmbeddingRecord> records) {
  if (records.empty()) throw ConfigError("cannot infer dimension of an empty embedding set");
  EmbeddingWriter writer(path, static_cast<std::uint32_t>(records.front().values.size()));
  for (const auto& r : records) writer.write(r.id, r.values);
  writer.close();
}

}  // namespace psearch::dense
