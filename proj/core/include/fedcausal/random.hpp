#pragma once

#include <cstdint>

namespace fedcausal {

/// Derives an independent child seed from (base, stream) with a splitmix64 finalizer,
/// so every consumer of randomness gets its own reproducible stream.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace seed_stream {
// Fixed stream tags; changing them changes every generated artifact.
inline constexpr std::uint64_t kGraph = 1;
inline constexpr std::uint64_t kMechanism = 2;
inline constexpr std::uint64_t kSimulation = 3;
inline constexpr std::uint64_t kPartition = 4;
inline constexpr std::uint64_t kModelInit = 5;
inline constexpr std::uint64_t kClientKind = 6;
inline constexpr std::uint64_t kSubsample = 7;
inline constexpr std::uint64_t kFirstLayer = 8;
}  // namespace seed_stream

}  // namespace fedcausal
