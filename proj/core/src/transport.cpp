#include "fedcausal/transport.hpp"

#include "frame_stream.hpp"

#include <algorithm>
#include <bit>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

namespace fedcausal {

namespace {

enum class Tag : std::uint8_t { Broadcast = 1, Upload = 2, Stop = 3 };

// Anything larger is treated as a corrupt length prefix.
constexpr std::size_t kMaxFrameBytes = std::size_t{1} << 31;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  std::vector<std::uint8_t> finish() {
    const auto length = static_cast<std::uint32_t>(out_.size() - 4);
    for (int i = 0; i < 4; ++i) out_[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(length >> (8 * i));
    return std::move(out_);
  }
  void reserve(std::size_t n) { out_.reserve(n); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_{0, 0, 0, 0};
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::uint64_t get(int count) {
    if (remaining() < static_cast<std::size_t>(count)) throw DecodeError("incomplete frame");
    std::uint64_t v = 0;
    for (int i = 0; i < count; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(count);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_block(Writer& w, const ParameterBlock& block) {
  if (block.values.size() != block.shape.count()) {
    throw std::invalid_argument("encode: block has " + std::to_string(block.values.size()) +
                                " values but shape " + to_string(block.shape));
  }
  w.u32(block.shape.stacks);
  w.u32(block.shape.rows);
  w.u32(block.shape.cols);
  for (double v : block.values) w.f64(v);
}

ParameterBlock read_block(Reader& r) {
  ParameterBlock block;
  block.shape.stacks = r.u32();
  block.shape.rows = r.u32();
  block.shape.cols = r.u32();
  const std::size_t count = block.shape.count();
  if (r.remaining() != count * 8) {
    throw DecodeError("payload length " + std::to_string(r.remaining()) +
                      " bytes disagrees with shape " + to_string(block.shape));
  }
  block.values.resize(count);
  for (double& v : block.values) v = r.f64();
  return block;
}

}  // namespace

std::string to_string(const BlockShape& shape) {
  return std::to_string(shape.stacks) + "x" + std::to_string(shape.rows) + "x" +
         std::to_string(shape.cols);
}

ParameterBlock ParameterBlock::from_matrix(const DenseMatrix& m, std::uint32_t stacks) {
  if (stacks == 0 || m.rows() % stacks != 0) {
    throw ShapeError("ParameterBlock: " + shape_string(m) + " does not split into " +
                     std::to_string(stacks) + " stacks");
  }
  ParameterBlock b;
  b.shape = {stacks, static_cast<std::uint32_t>(m.rows() / stacks),
             static_cast<std::uint32_t>(m.cols())};
  b.values = m.storage();
  return b;
}

DenseMatrix ParameterBlock::to_matrix() const {
  return DenseMatrix(std::size_t{shape.stacks} * shape.rows, shape.cols, values);
}

std::vector<std::uint8_t> encode(const Message& message) {
  Writer w;
  std::visit(
      [&w](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RoundBroadcast>) {
          w.reserve(kFramePrefixBytes + kBroadcastFieldBytes + kShapeHeaderBytes +
                    8 * m.global_block.values.size());
          w.u8(static_cast<std::uint8_t>(Tag::Broadcast));
          w.u16(kWireVersion);
          w.u32(m.round);
          w.f64(m.alpha);
          w.f64(m.rho);
          write_block(w, m.global_block);
        } else if constexpr (std::is_same_v<T, ClientUpload>) {
          w.reserve(kFramePrefixBytes + kUploadFieldBytes + kShapeHeaderBytes +
                    8 * m.first_layer.values.size());
          w.u8(static_cast<std::uint8_t>(Tag::Upload));
          w.u16(kWireVersion);
          w.u32(m.round);
          w.u32(m.client_id);
          w.u32(m.n_k);
          write_block(w, m.first_layer);
        } else {
          w.u8(static_cast<std::uint8_t>(Tag::Stop));
          w.u16(kWireVersion);
          write_block(w, m.final_block);
        }
      },
      message);
  return w.finish();
}

std::size_t frame_size(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return 0;
  std::size_t length = 0;
  for (int i = 0; i < 4; ++i) length |= std::size_t{bytes[static_cast<std::size_t>(i)]} << (8 * i);
  if (length > kMaxFrameBytes) throw DecodeError("frame length " + std::to_string(length) + " is implausible");
  return length + 4;
}

Message decode(std::span<const std::uint8_t> bytes) {
  const std::size_t total = frame_size(bytes);
  if (total == 0 || bytes.size() < total) throw DecodeError("incomplete frame");
  if (bytes.size() > total) throw DecodeError("trailing bytes after frame");
  Reader r(bytes.subspan(4));
  const auto tag = r.u8();
  const auto version = r.u16();
  if (version != kWireVersion) {
    throw DecodeError("version mismatch: got " + std::to_string(version) + ", expected " +
                      std::to_string(kWireVersion));
  }
  switch (static_cast<Tag>(tag)) {
    case Tag::Broadcast: {
      RoundBroadcast m;
      m.round = r.u32();
      m.alpha = r.f64();
      m.rho = r.f64();
      m.global_block = read_block(r);
      return m;
    }
    case Tag::Upload: {
      ClientUpload m;
      m.round = r.u32();
      m.client_id = r.u32();
      m.n_k = r.u32();
      m.first_layer = read_block(r);
      return m;
    }
    case Tag::Stop:
      return Stop{read_block(r)};
  }
  throw DecodeError("bad tag " + std::to_string(tag));
}

std::string to_string(ModelFamily family) {
  return family == ModelFamily::Linear ? "linear" : "mlp";
}

ModelFamily parse_model_family(const std::string& text) {
  if (text == "linear") return ModelFamily::Linear;
  if (text == "mlp") return ModelFamily::Mlp;
  throw std::invalid_argument("unknown model family '" + text + "' (expected linear or mlp)");
}

std::string to_string(TransportKind kind) {
  return kind == TransportKind::InProcess ? "inproc" : "socket";
}

TransportKind parse_transport_kind(const std::string& text) {
  if (text == "inproc") return TransportKind::InProcess;
  if (text == "socket") return TransportKind::Socket;
  throw std::invalid_argument("unknown transport '" + text + "' (expected inproc or socket)");
}

BlockShape SessionConfig::block_shape() const {
  const auto dd = static_cast<std::uint32_t>(d);
  if (family == ModelFamily::Linear) return {1, dd, dd};
  return {dd, static_cast<std::uint32_t>(hidden), dd};
}

void SessionConfig::validate() const {
  if (clients == 0) throw std::invalid_argument("SessionConfig: need at least one client");
  if (d == 0) throw std::invalid_argument("SessionConfig: d must be >= 1");
  if (family == ModelFamily::Mlp && hidden == 0) {
    throw std::invalid_argument("SessionConfig: hidden must be >= 1 for MLP sessions");
  }
}

RoundVolume bytes_per_round(const SessionConfig& session, Direction direction) {
  const std::size_t per_block = session.block_shape().count();
  RoundVolume v;
  if (direction == Direction::Upload) {
    v.payload_reals = session.clients * per_block;
    v.framing_bytes = session.clients * (kFramePrefixBytes + kUploadFieldBytes + kShapeHeaderBytes);
  } else {
    v.payload_reals = per_block;
    v.framing_bytes = kFramePrefixBytes + kBroadcastFieldBytes + kShapeHeaderBytes;
  }
  v.payload_bytes = 8 * v.payload_reals;
  return v;
}

std::size_t wire_bytes_per_round(const SessionConfig& session, Direction direction) {
  const auto v = bytes_per_round(session, direction);
  return direction == Direction::Upload ? v.total_bytes() : session.clients * v.total_bytes();
}

std::size_t SessionStats::total_upload_bytes() const noexcept {
  std::size_t s = 0;
  for (const auto& r : rounds) s += r.upload_bytes;
  return s;
}

std::size_t SessionStats::total_broadcast_bytes() const noexcept {
  std::size_t s = 0;
  for (const auto& r : rounds) s += r.broadcast_bytes;
  return s;
}

namespace detail {

namespace {

struct SharedQueues {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::vector<std::uint8_t>> queue[2];
  bool closed[2] = {false, false};
};

class InProcessStream final : public FrameStream {
 public:
  InProcessStream(std::shared_ptr<SharedQueues> shared, int side)
      : shared_(std::move(shared)), side_(side) {}
  ~InProcessStream() override { close(); }

  bool send(std::span<const std::uint8_t> frame) override {
    std::lock_guard lock(shared_->mutex);
    if (shared_->closed[0] || shared_->closed[1]) return false;
    shared_->queue[1 - side_].emplace_back(frame.begin(), frame.end());
    shared_->cv.notify_all();
    return true;
  }

  std::optional<std::vector<std::uint8_t>> receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(shared_->mutex);
    auto& inbox = shared_->queue[side_];
    const bool ready = shared_->cv.wait_for(lock, timeout, [&] {
      return !inbox.empty() || shared_->closed[0] || shared_->closed[1];
    });
    if (!ready) throw SessionError("timed out waiting for peer");
    if (inbox.empty()) return std::nullopt;
    auto frame = std::move(inbox.front());
    inbox.pop_front();
    return frame;
  }

  void close() override {
    std::lock_guard lock(shared_->mutex);
    shared_->closed[side_] = true;
    shared_->cv.notify_all();
  }

 private:
  std::shared_ptr<SharedQueues> shared_;
  int side_;
};

}  // namespace

StreamPair make_in_process_pair() {
  auto shared = std::make_shared<SharedQueues>();
  return {std::make_unique<InProcessStream>(shared, 0), std::make_unique<InProcessStream>(shared, 1)};
}

}  // namespace detail

namespace {

struct ClientFailure {
  std::mutex mutex;
  std::map<std::uint32_t, std::string> reasons;

  void record(std::uint32_t id, std::string why) {
    std::lock_guard lock(mutex);
    reasons.emplace(id, std::move(why));
  }
  std::string reason(std::uint32_t id) {
    std::lock_guard lock(mutex);
    auto it = reasons.find(id);
    return it == reasons.end() ? std::string{} : it->second;
  }
};

void client_loop(detail::FrameStream& stream, ClientRole& role, std::chrono::milliseconds timeout,
                 ClientFailure& failures) {
  const std::uint32_t id = role.client_id();
  try {
    ClientUpload hello{0, id, role.sample_count(), ParameterBlock{{0, 0, 0}, {}}};
    if (!stream.send(encode(hello))) return;
    while (true) {
      auto frame = stream.receive(timeout);
      if (!frame) return;
      const Message msg = decode(*frame);
      if (const auto* b = std::get_if<RoundBroadcast>(&msg)) {
        ClientUpload up{b->round, id, role.sample_count(), role.on_broadcast(*b)};
        if (!stream.send(encode(up))) return;
      } else if (const auto* s = std::get_if<Stop>(&msg)) {
        role.on_stop(*s);
        break;
      } else {
        throw DecodeError("client received an upload frame");
      }
    }
  } catch (const std::exception& e) {
    failures.record(id, e.what());
  }
  stream.close();
}

std::string resolve_endpoint(const SessionConfig& session) {
  if (const char* env = std::getenv("FEDCAUSAL_ENDPOINT"); env != nullptr && *env != '\0') {
    return env;
  }
  return session.endpoint;
}

class ClientThreads {
 public:
  ~ClientThreads() { join(); }
  void spawn(std::function<void()> fn) { threads_.emplace_back(std::move(fn)); }
  void join() {
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

 private:
  std::vector<std::thread> threads_;
};

}  // namespace

SessionStats run_session(ServerRole& server, std::span<ClientRole* const> clients,
                         const SessionConfig& session, const SessionHooks& hooks) {
  session.validate();
  const std::size_t k = clients.size();
  if (k != session.clients) {
    throw SessionError("session expects " + std::to_string(session.clients) + " clients, got " +
                       std::to_string(k));
  }
  const BlockShape expected = session.block_shape();
  const auto timeout = session.timeout;

  ClientFailure failures;
  std::vector<std::unique_ptr<detail::FrameStream>> links;
  std::vector<std::unique_ptr<detail::FrameStream>> client_ends(k);
  ClientThreads threads;
  auto close_all = [&links] {
    for (auto& l : links)
      if (l) l->close();
  };

  try {
    if (session.transport == TransportKind::InProcess) {
      for (std::size_t c = 0; c < k; ++c) {
        auto [server_end, client_end] = detail::make_in_process_pair();
        links.push_back(std::move(server_end));
        client_ends[c] = std::move(client_end);
      }
      for (std::size_t c = 0; c < k; ++c) {
        threads.spawn([&, c] { client_loop(*client_ends[c], *clients[c], timeout, failures); });
      }
    } else {
      detail::SocketListener listener(resolve_endpoint(session));
      const std::string host = listener.host();
      const std::uint16_t port = listener.port();
      for (std::size_t c = 0; c < k; ++c) {
        threads.spawn([&, c, host, port] {
          try {
            client_ends[c] = detail::connect_socket(host, port);
          } catch (const std::exception& e) {
            failures.record(clients[c]->client_id(), e.what());
            return;
          }
          client_loop(*client_ends[c], *clients[c], timeout, failures);
        });
      }
      for (std::size_t c = 0; c < k; ++c) links.push_back(listener.accept(timeout));
    }

    SessionStats stats;
    // Registration: map every link to the client id it announces.
    std::vector<std::uint32_t> link_client(k);
    std::map<std::uint32_t, std::size_t> client_link;
    for (std::size_t l = 0; l < k; ++l) {
      auto frame = links[l]->receive(timeout);
      if (!frame) throw SessionError("client link " + std::to_string(l) + " closed before registering");
      stats.handshake_bytes += frame->size();
      const Message msg = decode(*frame);
      const auto* hello = std::get_if<ClientUpload>(&msg);
      if (hello == nullptr || hello->round != 0) {
        throw SessionError("client link " + std::to_string(l) + " sent an invalid registration");
      }
      if (!client_link.emplace(hello->client_id, l).second) {
        throw SessionError("duplicate client id " + std::to_string(hello->client_id));
      }
      link_client[l] = hello->client_id;
    }

    auto disconnected = [&](std::uint32_t id, std::uint32_t round) {
      std::string msg = "client " + std::to_string(id) + " disconnected during round " +
                        std::to_string(round);
      const auto why = failures.reason(id);
      if (!why.empty()) msg += ": " + why;
      return SessionError(msg);
    };

    RoundBroadcast broadcast = server.open();
    while (true) {
      RoundTraffic traffic;
      traffic.round = broadcast.round;
      const auto frame = encode(broadcast);
      for (std::size_t l = 0; l < k; ++l) {
        if (!links[l]->send(frame)) throw disconnected(link_client[l], broadcast.round);
        traffic.broadcast_bytes += frame.size();
      }
      traffic.broadcast_payload_reals = broadcast.global_block.values.size();

      // Barrier: aggregation starts only once every client has uploaded.
      std::vector<ClientUpload> uploads;
      uploads.reserve(k);
      for (const auto& [id, l] : client_link) {
        std::optional<std::vector<std::uint8_t>> reply;
        try {
          reply = links[l]->receive(timeout);
        } catch (const SessionError& e) {
          throw SessionError("client " + std::to_string(id) + " in round " +
                             std::to_string(broadcast.round) + ": " + e.what());
        }
        if (!reply) throw disconnected(id, broadcast.round);
        traffic.upload_bytes += reply->size();
        Message msg = decode(*reply);
        auto* up = std::get_if<ClientUpload>(&msg);
        if (up == nullptr || up->round != broadcast.round || up->client_id != id) {
          throw SessionError("client " + std::to_string(id) + " sent an unexpected frame in round " +
                             std::to_string(broadcast.round));
        }
        if (up->first_layer.shape != expected) {
          throw SessionError("client " + std::to_string(id) + " uploaded a " +
                             to_string(up->first_layer.shape) + " block, session expects " +
                             to_string(expected));
        }
        traffic.upload_payload_reals += up->first_layer.values.size();
        ++traffic.uploads_received;
        if (hooks.on_upload) hooks.on_upload(*up);
        uploads.push_back(std::move(*up));
      }
      stats.rounds.push_back(traffic);

      auto next = server.aggregate(std::move(uploads));
      if (auto* stop = std::get_if<Stop>(&next)) {
        const auto stop_frame = encode(*stop);
        for (auto& link : links) {
          if (link->send(stop_frame)) stats.stop_bytes += stop_frame.size();
        }
        break;
      }
      auto& following = std::get<RoundBroadcast>(next);
      if (following.round <= broadcast.round) {
        throw SessionError("server round numbers must increase");
      }
      broadcast = std::move(following);
    }
    threads.join();
    close_all();
    return stats;
  } catch (...) {
    close_all();
    threads.join();
    throw;
  }
}

}  // namespace fedcausal
