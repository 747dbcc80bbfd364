#include "psearch/distributed/server.hpp"

#include <spdlog/spdlog.h>

#include "psearch/errors.hpp"
#include "psearch/distributed/socket.hpp"

namespace psearch::distributed {

struct IndexServer::Connection {
  Socket socket;
  std::thread thread;
  std::atomic<bool> done{false};
};

namespace {

nlohmann::json result_json(const SearchResult& r) {
  return {{"passage_id", r.passage_id}, {"score", r.score}, {"shard_id", r.shard_id}};
}

}  // namespace

IndexServer::IndexServer(ServerOptions options) : options_(std::move(options)) {
  if (options_.shard_ids.empty()) throw ConfigError("server hosts no shards");
  for (auto id : options_.shard_ids) {
    shards_.emplace(id, std::make_unique<Shard>(id, options_.data_dir / ("shard-" + std::to_string(id)),
                                                options_.shard));
  }
}

IndexServer::~IndexServer() {
  try {
    stop(false);
  } catch (const std::exception& e) {
    spdlog::error("server shutdown: {}", e.what());
  }
}

Shard& IndexServer::shard(std::uint32_t shard_id) {
  auto it = shards_.find(shard_id);
  if (it == shards_.end()) throw ConfigError("shard " + std::to_string(shard_id) + " is not hosted here");
  return *it->second;
}

void IndexServer::start() {
  listener_ = std::make_unique<Listener>(options_.host, options_.port);
  port_ = listener_->port();
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  spdlog::info("index server listening on {}:{} with {} shard(s)", options_.host, port_, shards_.size());
}

void IndexServer::stop(bool snapshot) {
  if (running_.exchange(false)) {
    listener_->shutdown();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<std::unique_ptr<Connection>> conns;
    {
      std::lock_guard lock(conn_mu_);
      conns.swap(connections_);
    }
    for (auto& c : conns) c->socket.shutdown();
    for (auto& c : conns) {
      if (c->thread.joinable()) c->thread.join();
    }
  }
  if (snapshot) {
    for (auto& [id, s] : shards_) s->snapshot();
    spdlog::info("persisted {} shard(s)", shards_.size());
  }
}

void IndexServer::accept_loop() {
  while (running_) {
    Socket socket;
    try {
      socket = listener_->accept();
    } catch (const TransportError&) {
      if (!running_) return;
      continue;
    }
    std::lock_guard lock(conn_mu_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if ((*it)->done) {
        (*it)->thread.join();
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
    auto conn = std::make_unique<Connection>();
    conn->socket = std::move(socket);
    auto* raw = conn.get();
    connections_.push_back(std::move(conn));
    raw->thread = std::thread([this, raw] { serve(*raw); });
  }
}

void IndexServer::serve(Connection& conn) {
  bool binary_allowed = false;
  try {
    while (running_) {
      Frame request = read_frame(conn.socket, no_deadline());
      Frame response;
      const auto op = request.header.value("op", "");
      if (op == ops::hello) {
        const auto id = request.header.value("request_id", std::uint64_t{0});
        const auto& payload = request.header.value("payload", nlohmann::json::object());
        const auto version = payload.value("protocol_version", 0u);
        if (version != kProtocolVersion) {
          response.header = error_response(id, "unsupported_version",
                                           "server speaks protocol version " + std::to_string(kProtocolVersion));
          write_frame(conn.socket, response, no_deadline());
          break;
        }
        binary_allowed = payload.value("binary_vectors", false);
        response.header = {{"request_id", id},
                           {"status", "ok"},
                           {"protocol_version", kProtocolVersion},
                           {"binary_vectors", binary_allowed}};
      } else {
        response.header = handle(request, binary_allowed);
      }
      write_frame(conn.socket, response, no_deadline());
    }
  } catch (const TransportError&) {
    // peer went away or server is stopping
  } catch (const std::exception& e) {
    spdlog::warn("connection dropped: {}", e.what());
  }
  conn.done = true;
}

nlohmann::json IndexServer::handle(const Frame& frame, bool binary_allowed) {
  const auto id = frame.header.value("request_id", std::uint64_t{0});
  try {
    if (frame.type == FrameType::binary && !binary_allowed) {
      return error_response(id, "bad_request", "binary frames require a hello negotiating binary_vectors");
    }
    const auto op = frame.header.value("op", "");
    const auto& payload = frame.header.contains("payload") ? frame.header["payload"] : nlohmann::json::object();
    if (op == ops::add) return handle_add(id, payload, frame.floats);
    if (op == ops::search) return handle_search(id, payload, frame.floats);
    if (op == ops::stats) return handle_stats(id, payload);
    return error_response(id, "bad_request", "unknown op '" + op + "'");
  } catch (const BuildError& e) {
    return error_response(id, "rejected", e.what());
  } catch (const DimensionMismatch& e) {
    return error_response(id, "dimension_mismatch", e.what());
  } catch (const ConfigError& e) {
    return error_response(id, "bad_request", e.what());
  } catch (const ParseError& e) {
    return error_response(id, "bad_request", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(id, "bad_request", e.what());
  } catch (const std::exception& e) {
    return error_response(id, "internal", e.what());
  }
}

nlohmann::json IndexServer::handle_add(std::uint64_t id, const nlohmann::json& payload,
                                       const std::vector<float>& floats) {
  const auto shard_id = payload.at("shard_id").get<std::uint32_t>();
  const auto& items = payload.at("items");
  AddBatch batch;
  batch.reserve(items.size());
  for (const auto& item : items) {
    BatchItem b;
    b.passage_id = item.at("passage_id").get<std::string>();
    b.title = item.value("title", "");
    b.text = item.value("text", "");
    if (item.contains("vector")) b.vector = item["vector"].get<std::vector<float>>();
    batch.push_back(std::move(b));
  }
  if (!floats.empty()) {
    if (batch.empty() || floats.size() % batch.size() != 0) {
      throw ParseError("payload", "binary add payload does not divide evenly among items");
    }
    const std::size_t dim = floats.size() / batch.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i].vector.assign(floats.begin() + static_cast<std::ptrdiff_t>(i * dim),
                             floats.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    }
  }
  auto& target = shard(shard_id);
  const auto epoch = target.add_batch(batch);
  return {{"request_id", id},
          {"status", "ok"},
          {"shard_id", shard_id},
          {"vector_count", target.vector_count()},
          {"epoch", {{std::to_string(shard_id), epoch}}}};
}

nlohmann::json IndexServer::handle_search(std::uint64_t id, const nlohmann::json& payload,
                                          const std::vector<float>& floats) {
  const auto k = payload.at("k").get<std::size_t>();
  if (k == 0) throw ConfigError("k must be at least 1");
  std::optional<std::size_t> ef;
  if (payload.contains("ef_search") && !payload["ef_search"].is_null()) ef = payload["ef_search"].get<std::size_t>();

  Query query;
  if (!floats.empty()) {
    query = floats;
  } else if (payload.contains("vector")) {
    query = payload["vector"].get<std::vector<float>>();
  } else if (payload.contains("text")) {
    query = payload["text"].get<std::string>();
  } else {
    throw ParseError("payload", "search needs a vector or text");
  }

  std::optional<sparse::CollectionStats> global;
  if (payload.contains("global_stats")) {
    const auto& g = payload["global_stats"];
    sparse::CollectionStats s;
    s.passage_count = g.at("passage_count").get<std::uint64_t>();
    s.total_length = g.at("total_length").get<std::uint64_t>();
    for (const auto& [term, df] : g.at("df").items()) s.document_frequency[term] = df.get<std::uint64_t>();
    global = std::move(s);
  }

  std::vector<std::uint32_t> targets;
  if (payload.contains("shards")) {
    targets = payload["shards"].get<std::vector<std::uint32_t>>();
  } else {
    for (const auto& [sid, _] : shards_) targets.push_back(sid);
  }

  nlohmann::json results = nlohmann::json::array();
  nlohmann::json epochs = nlohmann::json::object();
  for (auto sid : targets) {
    auto r = shard(sid).search(query, k, ef, global ? &*global : nullptr);
    epochs[std::to_string(sid)] = r.epoch;
    for (const auto& hit : r.results) results.push_back(result_json(hit));
  }
  return {{"request_id", id}, {"status", "ok"}, {"results", std::move(results)}, {"epoch", std::move(epochs)}};
}

nlohmann::json IndexServer::handle_stats(std::uint64_t id, const nlohmann::json& payload) {
  std::vector<std::string> terms;
  if (payload.contains("terms")) terms = payload["terms"].get<std::vector<std::string>>();
  nlohmann::json shards = nlohmann::json::array();
  for (const auto& [sid, s] : shards_) {
    auto st = s->stats(terms);
    nlohmann::json df = nlohmann::json::object();
    for (const auto& [term, n] : st.collection.document_frequency) df[term] = n;
    shards.push_back({{"shard_id", sid},
                      {"vector_count", st.vector_count},
                      {"epoch", st.epoch},
                      {"has_vectors", st.has_vectors},
                      {"dim", st.dim},
                      {"passage_count", st.collection.passage_count},
                      {"total_length", st.collection.total_length},
                      {"df", std::move(df)}});
  }
  return {{"request_id", id}, {"status", "ok"}, {"shards", std::move(shards)}};
}

}  // namespace psearch::distributed
