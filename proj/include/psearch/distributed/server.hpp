#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "psearch/distributed/protocol.hpp"
#include "psearch/distributed/shard.hpp"

namespace psearch::distributed {

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;                  // 0 picks an ephemeral port
  std::vector<std::uint32_t> shard_ids;    // logical shards hosted here
  std::filesystem::path data_dir;          // one subdirectory per shard
  ShardConfig shard;
};

/// Hosts a set of shards behind the framed protocol. One thread per
/// connection; searches on different connections run concurrently.
class IndexServer {
 public:
  /// Opens (and replays) every shard under data_dir.
  explicit IndexServer(ServerOptions options);
  ~IndexServer();
  IndexServer(const IndexServer&) = delete;
  IndexServer& operator=(const IndexServer&) = delete;

  /// Binds and starts accepting. Throws TransportError if the port is taken.
  void start();
  /// Stops accepting, closes connections and, when `snapshot` is set,
  /// persists every shard.
  void stop(bool snapshot = true);

  std::uint16_t port() const noexcept { return port_; }
  Shard& shard(std::uint32_t shard_id);

  /// Handles one request frame; exposed for in-process tests.
  nlohmann::json handle(const Frame& frame, bool binary_allowed);

 private:
  struct Connection;
  void accept_loop();
  void serve(Connection& conn);
  nlohmann::json handle_add(std::uint64_t id, const nlohmann::json& payload, const std::vector<float>& floats);
  nlohmann::json handle_search(std::uint64_t id, const nlohmann::json& payload, const std::vector<float>& floats);
  nlohmann::json handle_stats(std::uint64_t id, const nlohmann::json& payload);

  ServerOptions options_;
  std::map<std::uint32_t, std::unique_ptr<Shard>> shards_;
  std::unique_ptr<Listener> listener_;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> running_{false};
  std::mutex conn_mu_;
  std::list<std::unique_ptr<Connection>> connections_;
};

}  // namespace psearch::distributed
