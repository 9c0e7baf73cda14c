#include "frame_stream.hpp"

#include "fedcausal/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace fedcausal::detail {

namespace {

std::string errno_text() { return std::strerror(errno); }

std::pair<std::string, std::uint16_t> split_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos) {
    throw SessionError("endpoint '" + endpoint + "' is not host:port");
  }
  const std::string host = endpoint.substr(0, colon);
  unsigned long port = 0;
  try {
    port = std::stoul(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    throw SessionError("endpoint '" + endpoint + "' has a bad port");
  }
  if (port > 65535) throw SessionError("endpoint '" + endpoint + "' has a bad port");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* found = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &found) != 0 || found == nullptr) {
    throw SessionError("cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(found->ai_addr)->sin_addr;
  freeaddrinfo(found);
  return addr;
}

bool wait_readable(int fd, std::chrono::milliseconds timeout) {
  pollfd p{fd, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc < 0 && errno != EINTR) throw SessionError("poll failed: " + errno_text());
  return rc > 0;
}

class SocketStream final : public FrameStream {
 public:
  explicit SocketStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~SocketStream() override { close(); }

  bool send(std::span<const std::uint8_t> frame) override {
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      sent += static_cast<std::size_t>(n);
    }
    return true;
  }

  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) override {
    std::vector<std::uint8_t> frame(4);
    if (!read_exact(frame.data(), 4, timeout)) return std::nullopt;
    const std::size_t total = frame_size(frame);
    frame.resize(total);
    if (!read_exact(frame.data() + 4, total - 4, timeout)) return std::nullopt;
    return frame;
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  bool read_exact(std::uint8_t* out, std::size_t count, std::chrono::milliseconds timeout) {
    std::size_t got = 0;
    while (got < count) {
      if (!wait_readable(fd_, timeout)) throw SessionError("timed out waiting for peer");
      const ssize_t n = ::recv(fd_, out + got, count - got, 0);
      if (n == 0) return false;
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      got += static_cast<std::size_t>(n);
    }
    return true;
  }

  int fd_;
};

}  // namespace

SocketListener::SocketListener(const std::string& endpoint) {
  auto [host, port] = split_endpoint(endpoint);
  host_ = host;
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw SessionError("socket() failed: " + errno_text());
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(host, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = errno_text();
    ::close(fd_);
    throw SessionError("cannot bind " + endpoint + ": " + why);
  }
  if (::listen(fd_, 64) != 0) {
    const std::string why = errno_text();
    ::close(fd_);
    throw SessionError("listen failed: " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<FrameStream> SocketListener::accept(std::chrono::milliseconds timeout) {
  if (!wait_readable(fd_, timeout)) throw SessionError("timed out waiting for a client to connect");
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) throw SessionError("accept failed: " + errno_text());
  return std::make_unique<SocketStream>(client);
}

std::unique_ptr<FrameStream> connect_socket(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw SessionError("socket() failed: " + errno_text());
  sockaddr_in addr = resolve(host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = errno_text();
    ::close(fd);
    throw SessionError("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  return std::make_unique<SocketStream>(fd);
}

}  // namespace fedcausal::detail
