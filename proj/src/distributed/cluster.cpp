#include "psearch/distributed/cluster.hpp"

#include <algorithm>
#include <future>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <spdlog/spdlog.h>

#include "psearch/binary_io.hpp"
#include "psearch/distributed/merge.hpp"
#include "psearch/errors.hpp"

namespace psearch::distributed {

std::vector<std::uint32_t> ClusterConfig::shards_of(std::size_t server) const {
  std::vector<std::uint32_t> ids(logical_shards_per_server);
  std::iota(ids.begin(), ids.end(), static_cast<std::uint32_t>(server * logical_shards_per_server));
  return ids;
}

void ClusterConfig::validate() const {
  if (servers.empty()) throw ConfigError("cluster config lists no servers");
  if (logical_shards_per_server < 1) throw ConfigError("logical_shards_per_server must be >= 1");
  if (request_timeout.count() <= 0) throw ConfigError("request_timeout_ms must be positive");
  for (const auto& s : servers) {
    if (s.host.empty() || s.port == 0) throw ConfigError("server endpoint needs a host and a nonzero port");
  }
  shard.hnsw.validate();
  shard.bm25.validate();
}

bool operator==(const ClusterConfig& a, const ClusterConfig& b) {
  return a.servers == b.servers && a.logical_shards_per_server == b.logical_shards_per_server &&
         a.request_timeout == b.request_timeout && a.partial_results_allowed == b.partial_results_allowed &&
         a.binary_vectors == b.binary_vectors && a.shard.dense_mode == b.shard.dense_mode &&
         a.shard.hnsw == b.shard.hnsw && a.shard.bm25 == b.shard.bm25;
}

void to_json(nlohmann::json& j, const ClusterConfig& c) {
  nlohmann::json servers = nlohmann::json::array();
  for (const auto& s : c.servers) servers.push_back({{"host", s.host}, {"port", s.port}});
  j = {{"servers", servers},
       {"logical_shards_per_server", c.logical_shards_per_server},
       {"request_timeout_ms", c.request_timeout.count()},
       {"partial_results_allowed", c.partial_results_allowed},
       {"binary_vectors", c.binary_vectors},
       {"dense_mode", dense::to_string(c.shard.dense_mode)},
       {"hnsw",
        {{"M", c.shard.hnsw.M},
         {"ef_construction", c.shard.hnsw.ef_construction},
         {"ef_search", c.shard.hnsw.ef_search},
         {"seed", c.shard.hnsw.seed},
         {"train_size", c.shard.hnsw.train_size}}},
       {"bm25", {{"k1", c.shard.bm25.k1}, {"b", c.shard.bm25.b}}}};
}

void from_json(const nlohmann::json& j, ClusterConfig& c) {
  c = ClusterConfig{};
  for (const auto& s : j.at("servers")) {
    c.servers.push_back(Endpoint{s.value("host", "127.0.0.1"), s.at("port").get<std::uint16_t>()});
  }
  c.logical_shards_per_server = j.value("logical_shards_per_server", c.logical_shards_per_server);
  c.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", c.request_timeout.count()));
  c.partial_results_allowed = j.value("partial_results_allowed", c.partial_results_allowed);
  c.binary_vectors = j.value("binary_vectors", c.binary_vectors);
  if (j.contains("dense_mode")) c.shard.dense_mode = dense::parse_dense_mode(j["dense_mode"].get<std::string>());
  if (j.contains("hnsw")) {
    const auto& h = j["hnsw"];
    auto& p = c.shard.hnsw;
    p.M = h.value("M", p.M);
    p.ef_construction = h.value("ef_construction", p.ef_construction);
    p.ef_search = h.value("ef_search", p.ef_search);
    p.seed = h.value("seed", p.seed);
    p.train_size = h.value("train_size", p.train_size);
  }
  if (j.contains("bm25")) {
    c.shard.bm25.k1 = j["bm25"].value("k1", c.shard.bm25.k1);
    c.shard.bm25.b = j["bm25"].value("b", c.shard.bm25.b);
  }
}

ClusterConfig ClusterConfig::load(const std::filesystem::path& path) {
  ClusterConfig c;
  try {
    c = nlohmann::json::parse(io::read_file(path)).get<ClusterConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cluster config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::uint32_t> BalancedRouter::preference() const {
  std::vector<std::uint32_t> order(counts_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return counts_[a] < counts_[b]; });
  return order;
}

struct ClusterClient::Pool {
  Endpoint endpoint;
  std::mutex mu;
  std::vector<Socket> idle;
};

ClusterClient::ClusterClient(ClusterConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& ep : config_.servers) {
    auto pool = std::make_unique<Pool>();
    pool->endpoint = ep;
    pools_.push_back(std::move(pool));
  }
}

ClusterClient::~ClusterClient() = default;

nlohmann::json ClusterClient::call_once(std::size_t server, Frame& frame, Deadline deadline, bool pooled_ok) {
  auto& pool = *pools_[server];
  Socket socket;
  bool pooled = false;
  if (pooled_ok) {
    std::lock_guard lock(pool.mu);
    if (!pool.idle.empty()) {
      socket = std::move(pool.idle.back());
      pool.idle.pop_back();
      pooled = true;
    }
  }
  if (!socket.valid()) {
    socket = Socket::connect(pool.endpoint.host, pool.endpoint.port, deadline);
    Frame hello;
    hello.header = {{"op", ops::hello},
                    {"request_id", next_request_id_.fetch_add(1)},
                    {"payload", {{"protocol_version", kProtocolVersion}, {"binary_vectors", config_.binary_vectors}}}};
    write_frame(socket, hello, deadline);
    auto reply = read_frame(socket, deadline);
    if (reply.header.value("status", "") != "ok") {
      throw TransportError("hello rejected by " + pool.endpoint.to_string() + ": " + reply.header.dump());
    }
  }
  try {
    write_frame(socket, frame, deadline);
    auto reply = read_frame(socket, deadline);
    std::lock_guard lock(pool.mu);
    pool.idle.push_back(std::move(socket));
    return std::move(reply.header);
  } catch (const TransportError&) {
    // A pooled connection may have been closed by a restarted server.
    if (pooled && Clock::now() < deadline) return call_once(server, frame, deadline, false);
    throw;
  }
}

nlohmann::json ClusterClient::call(std::size_t server, const nlohmann::json& request,
                                   const std::vector<float>* floats) {
  Frame frame;
  frame.header = request;
  frame.header["request_id"] = next_request_id_.fetch_add(1);
  if (floats && config_.binary_vectors) {
    frame.type = FrameType::binary;
    frame.floats = *floats;
  }
  const Deadline deadline = Clock::now() + config_.request_timeout;
  return call_once(server, frame, deadline, true);
}

void ClusterClient::fail_shards(std::size_t server, const std::string& what) const {
  auto ids = config_.shards_of(server);
  std::string list;
  for (auto id : ids) list += (list.empty() ? "" : ",") + std::to_string(id);
  throw TransportError("shard(s) " + list + " on " + config_.servers[server].to_string() + ": " + what,
                       static_cast<int>(ids.front()));
}

namespace {

[[noreturn]] void raise_remote(const nlohmann::json& reply) {
  const auto code = reply.contains("error") ? reply["error"].value("code", "") : "";
  const auto message = reply.contains("error") ? reply["error"].value("message", "") : reply.dump();
  if (code == "rejected") throw BuildError(message);
  if (code == "dimension_mismatch") throw Error(message);
  if (code == "bad_request") throw ConfigError(message);
  throw Error("remote error: " + message);
}

}  // namespace

std::uint32_t ClusterClient::route_add(const AddBatch& batch) {
  std::vector<std::uint32_t> order;
  {
    std::lock_guard lock(router_mu_);
    if (!router_) {
      std::vector<std::uint64_t> counts(config_.total_shards(), 0);
      for (const auto& h : cluster_stats()) counts.at(h.shard_id) = h.vector_count;
      router_.emplace(std::move(counts));
    }
    order = router_->preference();
    // Reserve on the preferred shard so concurrent callers spread out.
    router_->commit(order.front(), batch.size());
  }

  nlohmann::json items = nlohmann::json::array();
  std::vector<float> floats;
  for (const auto& item : batch) {
    nlohmann::json j{{"passage_id", item.passage_id}, {"title", item.title}, {"text", item.text}};
    if (!item.vector.empty()) {
      if (config_.binary_vectors) {
        floats.insert(floats.end(), item.vector.begin(), item.vector.end());
      } else {
        j["vector"] = item.vector;
      }
    }
    items.push_back(std::move(j));
  }

  std::string last_error;
  for (std::size_t attempt = 0; attempt < order.size(); ++attempt) {
    const auto shard = order[attempt];
    if (attempt > 0) {
      std::lock_guard lock(router_mu_);
      router_->release(order[attempt - 1], batch.size());
      router_->commit(shard, batch.size());
    }
    nlohmann::json request{{"op", ops::add}, {"payload", {{"shard_id", shard}, {"items", items}}}};
    nlohmann::json reply;
    try {
      reply = call(config_.server_of(shard), request, floats.empty() ? nullptr : &floats);
    } catch (const TransportError& e) {
      last_error = e.what();
      spdlog::warn("add to shard {} failed ({}); trying next shard", shard, e.what());
      continue;
    }
    if (reply.value("status", "") != "ok") {
      std::lock_guard lock(router_mu_);
      router_->release(shard, batch.size());
      raise_remote(reply);
    }
    return shard;
  }
  {
    std::lock_guard lock(router_mu_);
    router_->release(order.back(), batch.size());
  }
  throw TransportError("indexing failed, no shard reachable: " + last_error);
}

std::vector<ShardStats> ClusterClient::gather_stats(const std::vector<std::string>& terms,
                                                    std::vector<std::size_t>& failed,
                                                    std::vector<std::string>& errors) {
  nlohmann::json request{{"op", ops::stats}, {"payload", {{"terms", terms}}}};
  std::vector<std::future<nlohmann::json>> futures;
  for (std::size_t s = 0; s < config_.servers.size(); ++s) {
    futures.push_back(std::async(std::launch::async, [this, s, &request] { return call(s, request, nullptr); }));
  }
  std::vector<ShardStats> out;
  for (std::size_t s = 0; s < futures.size(); ++s) {
    try {
      auto reply = futures[s].get();
      if (reply.value("status", "") != "ok") raise_remote(reply);
      for (const auto& sh : reply.at("shards")) {
        ShardStats st;
        st.shard_id = sh.at("shard_id").get<std::uint32_t>();
        st.vector_count = sh.at("vector_count").get<std::uint64_t>();
        st.epoch = sh.at("epoch").get<std::uint64_t>();
        st.has_vectors = sh.value("has_vectors", false);
        st.dim = sh.value("dim", std::size_t{0});
        st.collection.passage_count = sh.at("passage_count").get<std::uint64_t>();
        st.collection.total_length = sh.at("total_length").get<std::uint64_t>();
        for (const auto& [term, df] : sh.at("df").items()) st.collection.document_frequency[term] = df;
        out.push_back(std::move(st));
      }
    } catch (const std::exception& e) {
      failed.push_back(s);
      errors.push_back(e.what());
    }
  }
  return out;
}

std::vector<ShardHealth> ClusterClient::cluster_stats() {
  std::vector<std::size_t> failed;
  std::vector<std::string> errors;
  auto stats = gather_stats({}, failed, errors);
  std::vector<ShardHealth> out(config_.total_shards());
  for (std::uint32_t i = 0; i < out.size(); ++i) {
    out[i].shard_id = i;
    out[i].error = "no response";
  }
  for (const auto& st : stats) {
    if (st.shard_id >= out.size()) continue;
    out[st.shard_id] = ShardHealth{st.shard_id, true, st.vector_count, st.epoch, ""};
  }
  for (std::size_t f = 0; f < failed.size(); ++f) {
    for (auto id : config_.shards_of(failed[f])) out[id].error = errors[f];
  }
  return out;
}

ScatterResponse ClusterClient::scatter_search(const Query& query, std::size_t k,
                                              std::optional<std::size_t> ef_search) {
  if (k == 0) throw ConfigError("k must be at least 1");
  ScatterResponse response;
  std::set<std::size_t> down;

  nlohmann::json payload{{"k", k}};
  if (ef_search) payload["ef_search"] = *ef_search;
  const std::vector<float>* floats = nullptr;
  if (const auto* text = std::get_if<std::string>(&query)) {
    payload["text"] = *text;
    auto terms = sparse::analyze(*text);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    std::vector<std::size_t> failed;
    std::vector<std::string> errors;
    auto stats = gather_stats(terms, failed, errors);
    if (!failed.empty()) {
      if (!config_.partial_results_allowed) fail_shards(failed.front(), errors.front());
      down.insert(failed.begin(), failed.end());
    }
    sparse::CollectionStats global;
    for (const auto& st : stats) global.merge(st.collection);
    nlohmann::json df = nlohmann::json::object();
    for (const auto& [term, n] : global.document_frequency) df[term] = n;
    payload["global_stats"] = {
        {"passage_count", global.passage_count}, {"total_length", global.total_length}, {"df", std::move(df)}};
  } else {
    const auto& vec = std::get<std::vector<float>>(query);
    if (config_.binary_vectors) {
      floats = &vec;
    } else {
      payload["vector"] = vec;
    }
  }

  nlohmann::json request{{"op", ops::search}, {"payload", std::move(payload)}};
  std::vector<std::future<nlohmann::json>> futures(config_.servers.size());
  for (std::size_t s = 0; s < config_.servers.size(); ++s) {
    if (down.contains(s)) continue;
    futures[s] = std::async(std::launch::async, [this, s, &request, floats] { return call(s, request, floats); });
  }

  std::map<std::uint32_t, std::vector<SearchResult>> per_shard;
  std::vector<std::pair<std::size_t, std::string>> failures;
  for (std::size_t s = 0; s < futures.size(); ++s) {
    if (!futures[s].valid()) continue;
    try {
      auto reply = futures[s].get();
      if (reply.value("status", "") != "ok") raise_remote(reply);
      for (const auto& [sid, epoch] : reply.at("epoch").items()) {
        response.epochs[static_cast<std::uint32_t>(std::stoul(sid))] = epoch.get<std::uint64_t>();
        per_shard[static_cast<std::uint32_t>(std::stoul(sid))];
      }
      for (const auto& r : reply.at("results")) {
        SearchResult hit{r.at("passage_id").get<std::string>(), r.at("score").get<double>(), 0,
                         r.at("shard_id").get<std::uint32_t>()};
        per_shard[hit.shard_id].push_back(std::move(hit));
      }
    } catch (const TransportError& e) {
      failures.emplace_back(s, e.what());
    }
  }
  for (const auto& [s, what] : failures) {
    if (!config_.partial_results_allowed) fail_shards(s, what);
    down.insert(s);
  }
  for (auto s : down) {
    for (auto id : config_.shards_of(s)) response.missing_shards.push_back(id);
  }
  response.degraded = !response.missing_shards.empty();

  std::vector<std::vector<SearchResult>> lists;
  lists.reserve(per_shard.size());
  for (auto& [_, list] : per_shard) lists.push_back(std::move(list));
  response.results = merge_topk(lists, k);
  return response;
}

}  // namespace psearch::distributed
