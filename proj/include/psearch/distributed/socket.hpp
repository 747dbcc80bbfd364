#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace psearch::distributed {

using Clock = std::chrono::steady_clock;
using Deadline = Clock::time_point;

inline Deadline no_deadline() { return Deadline::max(); }

/// Owning TCP socket. All blocking calls honor a deadline and throw
/// TransportError on timeout, reset or EOF.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) noexcept : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  static Socket connect(const std::string& host, std::uint16_t port, Deadline deadline);

  void send_all(std::string_view data, Deadline deadline);
  void recv_exact(char* out, std::size_t n, Deadline deadline);

  /// Unblocks any thread waiting on this socket.
  void shutdown() noexcept;
  bool valid() const noexcept { return fd_ >= 0; }
  int fd() const noexcept { return fd_; }
  int release() noexcept;

 private:
  void wait(short events, Deadline deadline);
  int fd_ = -1;
};

class Listener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  Listener(const std::string& host, std::uint16_t port);
  std::uint16_t port() const noexcept { return port_; }
  /// Blocks; throws TransportError once shutdown() has been called.
  Socket accept();
  void shutdown() noexcept;

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

}  // namespace psearch::distributed
