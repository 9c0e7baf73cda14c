#pragma once

#include "fedcausal/dense_matrix.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fedcausal {

// Wire format of one frame, all integers little-endian:
//
//   u32 length     bytes following this field
//   u8  tag        1 = RoundBroadcast, 2 = ClientUpload, 3 = Stop
//   u16 version    kWireVersion
//   ...            variant fields (see below)
//   u32 stacks, u32 rows, u32 cols      block shape
//   f64 x (stacks*rows*cols)            block values, row-major
//
// RoundBroadcast fields: u32 round, f64 alpha, f64 rho
// ClientUpload fields:   u32 round, u32 client_id, u32 n_k
// Stop fields:           none

inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kFramePrefixBytes = 4 + 1 + 2;
inline constexpr std::size_t kShapeHeaderBytes = 12;
inline constexpr std::size_t kBroadcastFieldBytes = 4 + 8 + 8;
inline constexpr std::size_t kUploadFieldBytes = 4 + 4 + 4;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlockShape {
  std::uint32_t stacks = 1;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  [[nodiscard]] std::size_t count() const noexcept {
    return std::size_t{stacks} * rows * cols;
  }
  friend bool operator==(const BlockShape&, const BlockShape&) = default;
};

std::string to_string(const BlockShape& shape);

/// A parameter block as it travels: explicit shape plus row-major values.
struct ParameterBlock {
  BlockShape shape;
  std::vector<double> values;

  /// Wraps an (stacks*rows) x cols matrix.
  static ParameterBlock from_matrix(const DenseMatrix& m, std::uint32_t stacks = 1);
  /// The (stacks*rows) x cols matrix view of the values.
  [[nodiscard]] DenseMatrix to_matrix() const;

  friend bool operator==(const ParameterBlock&, const ParameterBlock&) = default;
};

struct RoundBroadcast {
  std::uint32_t round = 0;
  double alpha = 0.0;
  double rho = 0.0;
  ParameterBlock global_block;
  friend bool operator==(const RoundBroadcast&, const RoundBroadcast&) = default;
};

/// Carries only a first-layer block; there is no field for other layers or data.
struct ClientUpload {
  std::uint32_t round = 0;
  std::uint32_t client_id = 0;
  std::uint32_t n_k = 0;
  ParameterBlock first_layer;
  friend bool operator==(const ClientUpload&, const ClientUpload&) = default;
};

struct Stop {
  ParameterBlock final_block;
  friend bool operator==(const Stop&, const Stop&) = default;
};

using Message = std::variant<RoundBroadcast, ClientUpload, Stop>;

std::vector<std::uint8_t> encode(const Message& message);

/// Decodes exactly one frame. Throws DecodeError("incomplete frame") for short
/// input and DecodeError for bad tags, version mismatches, length/shape
/// disagreement or trailing bytes.
Message decode(std::span<const std::uint8_t> bytes);

/// Total size of the frame starting at `bytes`, or 0 if the length prefix is not complete.
std::size_t frame_size(std::span<const std::uint8_t> bytes);

enum class ModelFamily { Linear, Mlp };

std::string to_string(ModelFamily family);
ModelFamily parse_model_family(const std::string& text);

enum class TransportKind { InProcess, Socket };

std::string to_string(TransportKind kind);
TransportKind parse_transport_kind(const std::string& text);

struct SessionConfig {
  std::size_t clients = 1;
  std::size_t d = 0;
  /// Hidden width of the first layer; ignored for the linear family.
  std::size_t hidden = 1;
  ModelFamily family = ModelFamily::Linear;
  TransportKind transport = TransportKind::InProcess;
  /// host:port for socket sessions; port 0 picks a free port. The
  /// FEDCAUSAL_ENDPOINT environment variable overrides it.
  std::string endpoint = "127.0.0.1:0";
  std::chrono::milliseconds timeout{std::chrono::minutes(30)};

  /// (1, d, d) for linear sessions, (d, hidden, d) for MLP sessions.
  [[nodiscard]] BlockShape block_shape() const;
  void validate() const;
};

enum class Direction { Upload, Broadcast };

struct RoundVolume {
  /// Parameter count carried by the round's messages.
  std::size_t payload_reals = 0;
  std::size_t payload_bytes = 0;
  /// Length prefix, tag, version, variant fields and shape headers.
  std::size_t framing_bytes = 0;
  [[nodiscard]] std::size_t total_bytes() const noexcept { return payload_bytes + framing_bytes; }
};

/// Per-round volume. Upload covers all K uploads (K·d²·m or K·d² reals).
/// Broadcast covers the one logical broadcast (d²·m or d² reals); its wire
/// cost is K copies, see wire_bytes_per_round.
RoundVolume bytes_per_round(const SessionConfig& session, Direction direction);

/// Bytes that actually cross the transport in one round (all K frames).
std::size_t wire_bytes_per_round(const SessionConfig& session, Direction direction);

class ServerRole {
 public:
  virtual ~ServerRole() = default;
  /// First broadcast of the session.
  virtual RoundBroadcast open() = 0;
  /// Called once per round after all K uploads arrived, sorted by client id.
  virtual std::variant<RoundBroadcast, Stop> aggregate(std::vector<ClientUpload> uploads) = 0;
};

class ClientRole {
 public:
  virtual ~ClientRole() = default;
  [[nodiscard]] virtual std::uint32_t client_id() const = 0;
  [[nodiscard]] virtual std::uint32_t sample_count() const = 0;
  /// Runs the local step and returns the first-layer block to upload.
  virtual ParameterBlock on_broadcast(const RoundBroadcast& broadcast) = 0;
  virtual void on_stop(const Stop&) {}
};

struct RoundTraffic {
  std::uint32_t round = 0;
  std::size_t upload_bytes = 0;
  std::size_t broadcast_bytes = 0;
  std::size_t upload_payload_reals = 0;
  std::size_t broadcast_payload_reals = 0;
  std::size_t uploads_received = 0;
};

struct SessionStats {
  std::vector<RoundTraffic> rounds;
  /// Client registration frames sent before the first round.
  std::size_t handshake_bytes = 0;
  std::size_t stop_bytes = 0;
  [[nodiscard]] std::size_t total_upload_bytes() const noexcept;
  [[nodiscard]] std::size_t total_broadcast_bytes() const noexcept;
};

struct SessionHooks {
  /// Server-side tap on every decoded upload, in client-id order per round.
  std::function<void(const ClientUpload&)> on_upload;
};

/// Runs one synchronous session: broadcast to every client, wait for all K
/// uploads, aggregate, repeat until the server returns Stop. Each client runs
/// on its own thread. Throws SessionError if a client disconnects, misbehaves
/// or times out; the message names the client and round.
SessionStats run_session(ServerRole& server, std::span<ClientRole* const> clients,
                         const SessionConfig& session, const SessionHooks& hooks = {});

}  // namespace fedcausal
