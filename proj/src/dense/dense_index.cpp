#include "psearch/dense/dense_index.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <queue>
#include <unordered_set>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"

namespace psearch::dense {
namespace {

constexpr std::uint32_t kIdsMagic = 0x31495350;    // "PSI1"
constexpr std::uint32_t kGraphMagic = 0x31475350;  // "PSG1"
constexpr int kMaxLevel = 32;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Higher similarity first, then lower ordinal.
struct Better {
  template <typename C>
  bool operator()(const C& a, const C& b) const {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  }
};

}  // namespace

float inner_product(std::span<const float> a, std::span<const float> b) noexcept {
  const std::size_t n = a.size();
  const float* x = a.data();
  const float* y = b.data();
  float s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
    s4 += x[i + 4] * y[i + 4];
    s5 += x[i + 5] * y[i + 5];
    s6 += x[i + 6] * y[i + 6];
    s7 += x[i + 7] * y[i + 7];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
}

std::string_view to_string(DenseMode mode) { return mode == DenseMode::flat_exact ? "flat_exact" : "hnsw_sq8"; }

DenseMode parse_dense_mode(std::string_view name) {
  if (name == "flat_exact" || name == "flat") return DenseMode::flat_exact;
  if (name == "hnsw_sq8" || name == "hnsw") return DenseMode::hnsw_sq8;
  throw ConfigError("unknown dense mode '" + std::string(name) + "'");
}

double HnswParams::level_multiplier() const { return 1.0 / std::log(static_cast<double>(M)); }

void HnswParams::validate() const {
  if (M < 2) throw ConfigError("HNSW M must be at least 2");
  if (ef_construction < M) throw ConfigError("HNSW ef_construction must be >= M");
  if (ef_search < 1) throw ConfigError("HNSW ef_search must be >= 1");
  if (train_size < 1) throw ConfigError("quantizer train_size must be >= 1");
}

DenseIndex::DenseIndex(std::size_t dim, DenseMode mode, HnswParams params)
    : dim_(dim), mode_(mode), params_(params) {
  if (dim_ == 0) throw ConfigError("embedding dimension must be positive");
  params_.validate();
}

bool DenseIndex::contains(std::string_view id) const { return ordinals_.contains(std::string(id)); }

std::span<const float> DenseIndex::vector(std::uint32_t ordinal) const {
  if (ordinal >= size()) throw std::out_of_range("vector ordinal out of range");
  const auto& store = quantized_ ? recon_ : raw_;
  return {store.data() + static_cast<std::size_t>(ordinal) * dim_, dim_};
}

std::span<const std::uint32_t> DenseIndex::neighbors(std::uint32_t ordinal, int level) const {
  if (!quantized_ || ordinal >= links_.size() || level < 0 || level > levels_[ordinal]) return {};
  return links_[ordinal][level];
}

int DenseIndex::draw_level(std::uint32_t ordinal) const {
  const std::uint64_t bits = splitmix64(params_.seed ^ splitmix64(ordinal));
  const double u = static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double level = std::floor(-std::log(u) * params_.level_multiplier());
  return static_cast<int>(std::min(level, static_cast<double>(kMaxLevel)));
}

void DenseIndex::add(std::string_view id, std::span<const float> values) {
  EmbeddingRecord rec{std::string(id), std::vector<float>(values.begin(), values.end())};
  add_batch(std::span<const EmbeddingRecord>(&rec, 1));
}

void DenseIndex::add_batch(std::span<const EmbeddingRecord> batch) {
  std::unordered_set<std::string_view> batch_ids;
  for (const auto& rec : batch) {
    if (rec.values.size() != dim_) throw DimensionMismatch(dim_, rec.values.size());
    check_finite(rec.values);
    if (ordinals_.contains(rec.id) || !batch_ids.insert(rec.id).second) {
      throw BuildError("duplicate passage id '" + rec.id + "'");
    }
  }

  for (const auto& rec : batch) {
    const auto ordinal = static_cast<std::uint32_t>(ids_.size());
    ids_.push_back(rec.id);
    ordinals_.emplace(rec.id, ordinal);
    if (!quantized_) {
      raw_.insert(raw_.end(), rec.values.begin(), rec.values.end());
      if (mode_ == DenseMode::hnsw_sq8 && size() >= params_.train_size) train_and_link();
      continue;
    }
    const std::size_t off = static_cast<std::size_t>(ordinal) * dim_;
    codes_.resize(off + dim_);
    recon_.resize(off + dim_);
    quantizer_.encode(rec.values, std::span<std::uint8_t>(codes_.data() + off, dim_));
    quantizer_.decode(std::span<const std::uint8_t>(codes_.data() + off, dim_),
                      std::span<float>(recon_.data() + off, dim_));
    levels_.push_back(static_cast<std::uint8_t>(draw_level(ordinal)));
    links_.emplace_back(levels_.back() + 1);
    link(ordinal);
  }
}

void DenseIndex::finalize() {
  if (mode_ == DenseMode::hnsw_sq8 && !quantized_ && size() > 0) train_and_link();
}

void DenseIndex::train_and_link() {
  quantizer_ = train_quantizer(raw_, dim_);
  const std::size_t n = size();
  codes_.resize(n * dim_);
  recon_.resize(n * dim_);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const float> v(raw_.data() + i * dim_, dim_);
    std::span<std::uint8_t> code(codes_.data() + i * dim_, dim_);
    quantizer_.encode(v, code);
    quantizer_.decode(code, std::span<float>(recon_.data() + i * dim_, dim_));
  }
  raw_.clear();
  raw_.shrink_to_fit();
  quantized_ = true;

  levels_.resize(n);
  links_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    levels_[i] = static_cast<std::uint8_t>(draw_level(i));
    links_[i].resize(levels_[i] + 1);
  }
  for (std::uint32_t i = 0; i < n; ++i) link(i);
}

std::uint32_t DenseIndex::greedy_descend(std::span<const float> q, int down_to_level, float& sim) const {
  std::uint32_t cur = *entry_;
  sim = inner_product(q, vector(cur));
  for (int lev = max_level_; lev > down_to_level; --lev) {
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::uint32_t n : links_[cur][lev]) {
        const float s = inner_product(q, vector(n));
        if (s > sim || (s == sim && n < cur)) {
          cur = n;
          sim = s;
          changed = true;
        }
      }
    }
  }
  return cur;
}

std::vector<DenseIndex::Candidate> DenseIndex::search_layer(std::span<const float> q, std::uint32_t entry,
                                                            float entry_sim, std::size_t ef, int level) const {
  // candidates: best on top; results: worst on top.
  auto worse_on_top = [](const Candidate& a, const Candidate& b) { return Better{}(a, b); };
  auto best_on_top = [](const Candidate& a, const Candidate& b) { return Better{}(b, a); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(best_on_top)> candidates(best_on_top);
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse_on_top)> results(worse_on_top);
  std::vector<bool> visited(size(), false);

  visited[entry] = true;
  candidates.push({entry_sim, entry});
  results.push({entry_sim, entry});
  while (!candidates.empty()) {
    const Candidate c = candidates.top();
    if (results.size() >= ef && c.sim < results.top().sim) break;
    candidates.pop();
    for (std::uint32_t n : links_[c.id][level]) {
      if (visited[n]) continue;
      visited[n] = true;
      const Candidate next{inner_product(q, vector(n)), n};
      if (results.size() < ef || Better{}(next, results.top())) {
        candidates.push(next);
        results.push(next);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Candidate> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::sort(out.begin(), out.end(), Better{});
  return out;
}

// Diversity heuristic: a candidate is kept only if it is more similar to
// the base than to every already kept neighbor. Slots left over are
// refilled with the best pruned candidates. `candidates` must be sorted
// best first by similarity to the base.
std::vector<std::uint32_t> DenseIndex::select_neighbors(std::vector<Candidate>& candidates,
                                                        std::size_t limit) const {
  std::vector<std::uint32_t> selected;
  if (candidates.size() <= limit) {
    for (const auto& c : candidates) selected.push_back(c.id);
    return selected;
  }
  std::vector<std::uint32_t> pruned;
  for (const auto& c : candidates) {
    if (selected.size() >= limit) break;
    const auto vc = vector(c.id);
    bool keep = true;
    for (std::uint32_t s : selected) {
      if (inner_product(vc, vector(s)) > c.sim) {
        keep = false;
        break;
      }
    }
    (keep ? selected : pruned).push_back(c.id);
  }
  for (std::size_t i = 0; i < pruned.size() && selected.size() < limit; ++i) selected.push_back(pruned[i]);
  return selected;
}

void DenseIndex::connect(std::uint32_t node, std::uint32_t added, int level) {
  auto& list = links_[node][level];
  auto pos = std::lower_bound(list.begin(), list.end(), added);
  if (pos != list.end() && *pos == added) return;
  if (list.size() < max_degree(level)) {
    list.insert(pos, added);
    return;
  }

  const auto base = vector(node);
  std::vector<Candidate> candidates;
  candidates.reserve(list.size() + 1);
  for (std::uint32_t id : list) candidates.push_back({inner_product(base, vector(id)), id});
  candidates.push_back({inner_product(base, vector(added)), added});
  std::sort(candidates.begin(), candidates.end(), Better{});

  auto kept = select_neighbors(candidates, max_degree(level));
  std::sort(kept.begin(), kept.end());
  list = std::move(kept);
}

void DenseIndex::link(std::uint32_t node) {
  const int node_level = levels_[node];
  if (!entry_) {
    entry_ = node;
    max_level_ = node_level;
    return;
  }
  const auto q = vector(node);
  float ep_sim = 0;
  std::uint32_t ep = greedy_descend(q, node_level, ep_sim);

  for (int lev = std::min(node_level, max_level_); lev >= 0; --lev) {
    auto found = search_layer(q, ep, ep_sim, params_.ef_construction, lev);
    ep = found.front().id;
    ep_sim = found.front().sim;
    auto selected = select_neighbors(found, params_.M);
    std::sort(selected.begin(), selected.end());
    links_[node][lev] = selected;
    for (std::uint32_t n : selected) connect(n, node, lev);
  }
  if (node_level > max_level_) {
    entry_ = node;
    max_level_ = node_level;
  }
}

std::vector<SearchResult> DenseIndex::exhaustive(std::span<const float> query, std::size_t k) const {
  struct Hit {
    float sim;
    std::uint32_t id;
  };
  // Min-heap on (score, then larger passage id is worse).
  auto better = [this](const Hit& a, const Hit& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return ids_[a.id] < ids_[b.id];
  };
  std::priority_queue<Hit, std::vector<Hit>, decltype(better)> heap(better);
  for (std::uint32_t i = 0; i < size(); ++i) {
    const Hit h{inner_product(query, vector(i)), i};
    if (heap.size() < k) {
      heap.push(h);
    } else if (better(h, heap.top())) {
      heap.pop();
      heap.push(h);
    }
  }
  std::vector<SearchResult> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = SearchResult{ids_[heap.top().id], static_cast<double>(heap.top().sim), 0, 0};
    heap.pop();
  }
  assign_ranks(out);
  return out;
}

std::vector<SearchResult> DenseIndex::search(std::span<const float> query, std::size_t k,
                                             std::optional<std::size_t> ef_search) const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (query.size() != dim_) throw DimensionMismatch(dim_, query.size());
  if (size() == 0) return {};
  if (!quantized_) return exhaustive(query, k);

  const std::size_t ef = std::max(ef_search.value_or(params_.ef_search), k);
  float sim = 0;
  const std::uint32_t ep = greedy_descend(query, 0, sim);
  auto found = search_layer(query, ep, sim, ef, 0);

  std::vector<SearchResult> out;
  out.reserve(found.size());
  for (const auto& c : found) out.push_back(SearchResult{ids_[c.id], static_cast<double>(c.sim), 0, 0});
  std::sort(out.begin(), out.end(), score_then_id);
  if (out.size() > k) out.resize(k);
  assign_ranks(out);
  return out;
}

std::string DenseIndex::graph_bytes() const {
  io::Writer w;
  w.put(kGraphMagic);
  w.put(kFormatVersion);
  w.put<std::uint64_t>(links_.size());
  w.put<std::int64_t>(entry_ ? static_cast<std::int64_t>(*entry_) : -1);
  w.put<std::int32_t>(max_level_);
  for (std::size_t node = 0; node < links_.size(); ++node) {
    w.put_varint(levels_[node]);
    for (const auto& list : links_[node]) {
      w.put_varint(list.size());
      std::uint32_t prev = 0;
      for (std::uint32_t id : list) {
        w.put_varint(id - prev);
        prev = id;
      }
    }
  }
  return w.take();
}

void DenseIndex::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::Writer ids;
  ids.put(kIdsMagic);
  ids.put(kFormatVersion);
  ids.put<std::uint64_t>(ids_.size());
  for (const auto& id : ids_) ids.put_string(id);
  io::write_file_atomic(dir / "ids.bin", ids.data());

  if (quantized_) {
    io::Writer q;
    q.put<std::uint32_t>(static_cast<std::uint32_t>(dim_));
    for (double m : quantizer_.min()) q.put(m);
    for (double s : quantizer_.step()) q.put(s);
    io::write_file_atomic(dir / "quantizer.bin", q.data());
    io::write_file_atomic(dir / "codes.bin",
                          std::string_view(reinterpret_cast<const char*>(codes_.data()), codes_.size()));
    io::write_file_atomic(dir / "graph.bin", graph_bytes());
  } else {
    io::write_file_atomic(dir / "vectors.bin", std::string_view(reinterpret_cast<const char*>(raw_.data()),
                                                                raw_.size() * sizeof(float)));
  }

  nlohmann::json meta{{"format_version", kFormatVersion},
                      {"kind", "dense"},
                      {"mode", to_string(mode_)},
                      {"dim", dim_},
                      {"count", ids_.size()},
                      {"quantized", quantized_},
                      {"M", params_.M},
                      {"ef_construction", params_.ef_construction},
                      {"ef_search", params_.ef_search},
                      {"seed", params_.seed},
                      {"train_size", params_.train_size}};
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

DenseIndex DenseIndex::load(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dense index meta.json: " + std::string(e.what()));
  }
  if (meta.value("kind", "") != "dense") throw FormatError("not a dense index: " + dir.string());
  if (meta.value("format_version", 0u) != kFormatVersion) {
    throw FormatError("dense index format version " + meta.value("format_version", nlohmann::json()).dump() +
                      " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
  HnswParams params;
  params.M = meta.at("M").get<std::size_t>();
  params.ef_construction = meta.at("ef_construction").get<std::size_t>();
  params.ef_search = meta.at("ef_search").get<std::size_t>();
  params.seed = meta.at("seed").get<std::uint64_t>();
  params.train_size = meta.at("train_size").get<std::size_t>();
  DenseIndex index(meta.at("dim").get<std::size_t>(), parse_dense_mode(meta.at("mode").get<std::string>()), params);
  const std::size_t dim = index.dim_;

  auto ids_data = io::read_file(dir / "ids.bin");
  io::Reader ids(ids_data);
  if (ids.get<std::uint32_t>() != kIdsMagic || ids.get<std::uint32_t>() != kFormatVersion) {
    throw FormatError("bad ids.bin header");
  }
  const auto count = ids.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto id = ids.get_string();
    index.ordinals_.emplace(id, static_cast<std::uint32_t>(i));
    index.ids_.push_back(std::move(id));
  }

  if (!meta.at("quantized").get<bool>()) {
    auto data = io::read_file(dir / "vectors.bin");
    if (data.size() != count * dim * sizeof(float)) throw FormatError("vectors.bin has the wrong size");
    index.raw_.resize(count * dim);
    std::memcpy(index.raw_.data(), data.data(), data.size());
    return index;
  }

  auto qdata = io::read_file(dir / "quantizer.bin");
  io::Reader q(qdata);
  if (q.get<std::uint32_t>() != dim) throw FormatError("quantizer dimension mismatch");
  std::vector<double> min(dim), step(dim);
  for (auto& m : min) m = q.get<double>();
  for (auto& s : step) s = q.get<double>();
  index.quantizer_ = ScalarQuantizer(std::move(min), std::move(step));
  index.quantized_ = true;

  auto codes = io::read_file(dir / "codes.bin");
  if (codes.size() != count * dim) throw FormatError("codes.bin has the wrong size");
  index.codes_.assign(codes.begin(), codes.end());
  index.recon_.resize(count * dim);
  for (std::size_t i = 0; i < count; ++i) {
    index.quantizer_.decode(std::span<const std::uint8_t>(index.codes_.data() + i * dim, dim),
                            std::span<float>(index.recon_.data() + i * dim, dim));
  }

  auto gdata = io::read_file(dir / "graph.bin");
  io::Reader g(gdata);
  if (g.get<std::uint32_t>() != kGraphMagic || g.get<std::uint32_t>() != kFormatVersion) {
    throw FormatError("bad graph.bin header");
  }
  if (g.get<std::uint64_t>() != count) throw FormatError("graph node count mismatch");
  const auto entry = g.get<std::int64_t>();
  index.max_level_ = g.get<std::int32_t>();
  if (entry >= 0) index.entry_ = static_cast<std::uint32_t>(entry);
  index.levels_.resize(count);
  index.links_.resize(count);
  for (std::size_t node = 0; node < count; ++node) {
    const auto level = g.get_varint();
    if (level > static_cast<std::uint64_t>(kMaxLevel)) throw FormatError("graph level out of range");
    index.levels_[node] = static_cast<std::uint8_t>(level);
    index.links_[node].resize(level + 1);
    for (auto& list : index.links_[node]) {
      const auto n = g.get_varint();
      list.reserve(n);
      std::uint32_t prev = 0;
      for (std::uint64_t i = 0; i < n; ++i) {
        prev += static_cast<std::uint32_t>(g.get_varint());
        if (prev >= count) throw FormatError("graph neighbor out of range");
        list.push_back(prev);
      }
    }
  }
  return index;
}

DenseIndex build_dense(std::span<const EmbeddingRecord> embeddings, DenseMode mode, HnswParams params) {
  if (embeddings.empty()) {
    return DenseIndex(kDefaultDim, mode, params);
  }
  DenseIndex index(embeddings.front().values.size(), mode, params);
  index.add_batch(embeddings);
  index.finalize();
  return index;
}

}  // namespace psearch::dense
