#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedcausal::detail {

/// One end of a duplex link that moves whole frames.
class FrameStream {
 public:
  virtual ~FrameStream() = default;
  /// Returns false if the peer is gone.
  virtual bool send(std::span<const std::uint8_t> frame) = 0;
  /// Next frame, or nullopt once the peer closed. Throws SessionError on timeout.
  virtual std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

using StreamPair = std::pair<std::unique_ptr<FrameStream>, std::unique_ptr<FrameStream>>;

StreamPair make_in_process_pair();

/// Listening socket for the server side of a socket session.
class SocketListener {
 public:
  explicit SocketListener(const std::string& endpoint);
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  [[nodiscard]] std::string host() const { return host_; }
  [[nodiscard]] std::uint16_t port() const { return port_; }
  std::unique_ptr<FrameStream> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::string host_;
  std::uint16_t port_ = 0;
};

std::unique_ptr<FrameStream> connect_socket(const std::string& host, std::uint16_t port);

}  // namespace fedcausal::detail
