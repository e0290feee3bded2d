#pragma once

#include <array>
#include <cstdint>

namespace fhbench {

// Philox 4x32-10 block function. Counter-based: every output block is a pure
// function of (key, counter), so independent replications and components can
// be addressed directly without shared generator state.
struct Philox4x32 {
  static std::array<std::uint32_t, 4> block(const std::array<std::uint32_t, 2>& key,
                                            std::array<std::uint32_t, 4> ctr);
};

// One logical stream, identified by (seed, stream). Scalars are addressed by
// (replication, component); the same address always yields the same value,
// independent of evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t bits(std::uint32_t replication, std::uint32_t component) const;
  // Uniform on the open interval (0, 1).
  double uniform(std::uint32_t replication, std::uint32_t component) const;
  // Standard normal via the inverse CDF, one uniform per variate.
  double normal(std::uint32_t replication, std::uint32_t component) const;

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
};

// splitmix64-style mixer for deriving per-setting seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace fhbench
