#include "psearch/distributed/shard.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <unordered_set>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"

namespace psearch::distributed {
namespace fs = std::filesystem;
namespace {

constexpr std::uint32_t kSnapshotVersion = 1;

std::uint32_t crc(std::string_view data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

void write_fully(int fd, std::string_view data) {
  std::size_t done = 0;
  while (done < data.size()) {
    ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(std::string("batch log write failed: ") + std::strerror(errno));
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string encode_batch(std::uint64_t epoch, const AddBatch& batch) {
  io::Writer w;
  w.put(epoch);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(batch.size()));
  const std::uint32_t dim = batch.empty() ? 0 : static_cast<std::uint32_t>(batch.front().vector.size());
  w.put(dim);
  for (const auto& item : batch) {
    w.put_string(item.passage_id);
    w.put_string(item.title);
    w.put_string(item.text);
    w.put_floats(item.vector);
  }
  return w.take();
}

std::pair<std::uint64_t, AddBatch> decode_batch(std::string_view payload) {
  io::Reader r(payload);
  const auto epoch = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  AddBatch batch(count);
  for (auto& item : batch) {
    item.passage_id = r.get_string();
    item.title = r.get_string();
    item.text = r.get_string();
    item.vector.resize(dim);
    r.get_floats(item.vector);
  }
  if (!r.done()) throw FormatError("trailing bytes in batch record");
  return {epoch, std::move(batch)};
}

Shard::Shard(std::uint32_t shard_id, fs::path dir, ShardConfig config)
    : id_(shard_id), dir_(std::move(dir)), config_(config), sparse_(config.bm25) {
  config_.hnsw.validate();
  open();
}

Shard::~Shard() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void Shard::open() {
  fs::create_directories(dir_);
  const auto snap = dir_ / "snapshot";
  const auto tmp = dir_ / "snapshot.tmp";
  if (fs::exists(tmp)) {
    if (!fs::exists(snap) && fs::exists(tmp / "manifest.json")) {
      fs::rename(tmp, snap);
    } else {
      fs::remove_all(tmp);
    }
  }

  if (fs::exists(snap / "manifest.json")) {
    auto manifest = nlohmann::json::parse(io::read_file(snap / "manifest.json"));
    if (manifest.value("format_version", 0u) != kSnapshotVersion) {
      throw FormatError("shard " + std::to_string(id_) + ": unsupported snapshot version " +
                        manifest.value("format_version", nlohmann::json()).dump());
    }
    epoch_ = manifest.at("epoch").get<std::uint64_t>();
    if (manifest.contains("has_vectors") && !manifest["has_vectors"].is_null()) {
      has_vectors_ = manifest["has_vectors"].get<bool>();
    }
    sparse_ = sparse::SparseIndex::load(snap / "sparse");
    if (has_vectors_.value_or(false)) {
      dense_ = std::make_unique<dense::DenseIndex>(dense::DenseIndex::load(snap / "dense"));
    }
  }

  const auto log_path = dir_ / "batches.log";
  std::size_t valid_bytes = 0;
  std::size_t replayed = 0;
  if (fs::exists(log_path)) {
    const auto data = io::read_file(log_path);
    std::string_view rest(data);
    while (rest.size() >= 8) {
      std::uint32_t len = 0, sum = 0;
      std::memcpy(&len, rest.data(), 4);
      std::memcpy(&sum, rest.data() + 4, 4);
      if (rest.size() - 8 < len) break;
      auto payload = rest.substr(8, len);
      if (crc(payload) != sum) break;
      auto [epoch, batch] = decode_batch(payload);
      if (epoch > epoch_) {
        apply(batch);
        epoch_ = epoch;
        ++replayed;
      }
      valid_bytes += 8 + len;
      rest.remove_prefix(8 + len);
    }
    if (valid_bytes != data.size()) {
      spdlog::warn("shard {}: discarding {} bytes of torn batch log", id_, data.size() - valid_bytes);
    }
  }

  log_fd_ = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error("cannot open batch log " + log_path.string() + ": " + std::strerror(errno));
  if (::ftruncate(log_fd_, static_cast<off_t>(valid_bytes)) != 0 ||
      ::lseek(log_fd_, 0, SEEK_END) < 0) {
    throw Error("cannot prepare batch log " + log_path.string());
  }
  spdlog::debug("shard {}: opened at epoch {} with {} passages ({} batches replayed)", id_, epoch_,
                sparse_.size(), replayed);
}

void Shard::apply(const AddBatch& batch) {
  if (batch.empty()) return;
  const bool vectors = !batch.front().vector.empty();
  if (vectors && !dense_) {
    dense_ = std::make_unique<dense::DenseIndex>(batch.front().vector.size(), config_.dense_mode, config_.hnsw);
  }
  has_vectors_ = vectors;
  for (const auto& item : batch) sparse_.add(item.passage_id, item.title.empty() ? item.text : item.title + " " + item.text);
  if (vectors) {
    std::vector<dense::EmbeddingRecord> records;
    records.reserve(batch.size());
    for (const auto& item : batch) records.push_back({item.passage_id, item.vector});
    dense_->add_batch(records);
  }
}

void Shard::append_log(std::uint64_t epoch, const AddBatch& batch) {
  const auto payload = encode_batch(epoch, batch);
  io::Writer head;
  head.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
  head.put<std::uint32_t>(crc(payload));
  write_fully(log_fd_, head.data() + payload);
  if (::fdatasync(log_fd_) != 0) throw Error(std::string("batch log sync failed: ") + std::strerror(errno));
}

std::uint64_t Shard::add_batch(const AddBatch& batch) {
  std::lock_guard add_lock(add_mu_);
  if (batch.empty()) return epoch();

  const bool vectors = !batch.front().vector.empty();
  const std::size_t dim = batch.front().vector.size();
  std::unordered_set<std::string_view> ids;
  {
    std::shared_lock read(state_mu_);
    if (has_vectors_ && *has_vectors_ != vectors) {
      throw BuildError(vectors ? "shard holds no vectors; batch carries vectors"
                               : "shard holds vectors; batch carries none");
    }
    if (dense_ && vectors && dense_->dim() != dim) throw DimensionMismatch(dense_->dim(), dim);
    for (const auto& item : batch) {
      if (item.vector.size() != dim) {
        if (vectors && !item.vector.empty()) throw DimensionMismatch(dim, item.vector.size());
        throw BuildError("batch mixes items with and without vectors");
      }
      if (vectors) dense::check_finite(item.vector);
      if (!ids.insert(item.passage_id).second || sparse_.ordinal(item.passage_id)) {
        throw BuildError("duplicate passage id '" + item.passage_id + "'");
      }
    }
  }

  const std::uint64_t next = epoch_ + 1;
  append_log(next, batch);
  std::unique_lock write(state_mu_);
  apply(batch);
  epoch_ = next;
  return next;
}

ShardSearchResult Shard::search(const Query& query, std::size_t k, std::optional<std::size_t> ef_search,
                                const sparse::CollectionStats* global) const {
  std::shared_lock read(state_mu_);
  ShardSearchResult out;
  out.shard_id = id_;
  out.epoch = epoch_;
  if (const auto* text = std::get_if<std::string>(&query)) {
    auto terms = sparse::analyze(*text);
    if (sparse_.size() > 0 && !terms.empty()) out.results = sparse_.search(terms, k, global);
  } else {
    const auto& vec = std::get<std::vector<float>>(query);
    if (dense_) {
      out.results = dense_->search(vec, k, ef_search);
    } else if (sparse_.size() > 0) {
      throw ConfigError("shard " + std::to_string(id_) + " holds no vectors");
    }
  }
  for (auto& r : out.results) r.shard_id = id_;
  return out;
}

ShardStats Shard::stats(std::span<const std::string> terms) const {
  std::shared_lock read(state_mu_);
  ShardStats s;
  s.shard_id = id_;
  s.vector_count = sparse_.size();
  s.epoch = epoch_;
  s.has_vectors = dense_ != nullptr;
  s.dim = dense_ ? dense_->dim() : 0;
  s.collection = sparse_.stats_for(terms);
  return s;
}

std::uint64_t Shard::epoch() const {
  std::shared_lock read(state_mu_);
  return epoch_;
}

std::uint64_t Shard::vector_count() const {
  std::shared_lock read(state_mu_);
  return sparse_.size();
}

void Shard::snapshot() {
  std::lock_guard add_lock(add_mu_);
  std::shared_lock read(state_mu_);
  const auto snap = dir_ / "snapshot";
  const auto tmp = dir_ / "snapshot.tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  sparse_.save(tmp / "sparse");
  if (dense_) dense_->save(tmp / "dense");
  nlohmann::json manifest{{"format_version", kSnapshotVersion},
                          {"shard_id", id_},
                          {"epoch", epoch_},
                          {"vector_count", sparse_.size()},
                          {"has_vectors", has_vectors_ ? nlohmann::json(*has_vectors_) : nlohmann::json()}};
  io::write_file_atomic(tmp / "manifest.json", manifest.dump(2) + "\n");
  fs::remove_all(snap);
  fs::rename(tmp, snap);
  if (::ftruncate(log_fd_, 0) != 0 || ::lseek(log_fd_, 0, SEEK_SET) < 0) {
    throw Error("cannot truncate batch log for shard " + std::to_string(id_));
  }
  ::fdatasync(log_fd_);
}

}  // namespace psearch::distributed
