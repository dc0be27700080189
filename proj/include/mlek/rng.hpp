#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Core>

namespace mlek {

/// Substreams keep unrelated draws on disjoint counters, so e.g. turning
/// model stochasticity on or off never shifts the update-noise sequence.
enum class Substream : std::uint32_t {
  init = 0,         // initial-ensemble draws
  model = 1,        // forward-model noise (Brownian path)
  update = 2,       // the xi consumed by the particle update map
  data = 3,         // synthetic truth / observation generation
};

/// Address of one independent noise stream. Identical keys yield identical
/// draws regardless of run, thread schedule, or evaluation order. A level-l
/// fine particle and its coarse partner share the same key, which is what
/// couples their randomness.
struct NoiseKey {
  std::uint32_t level = 0;       // pair level (the fine level of a coupled pair)
  std::uint32_t pair_index = 0;  // particle index within the subpopulation
  std::uint32_t time_index = 0;
  std::uint32_t replica = 0;     // replication / repeated-run index
  Substream substream = Substream::update;
};

namespace detail {

struct PhiloxBlock {
  std::uint32_t x[4];
};

/// Philox-4x32-10 keyed counter permutation (Salmon et al., SC 2011).
PhiloxBlock philox4x32(const std::uint32_t counter[4], const std::uint32_t key[2]);

}  // namespace detail

/// Random access into the Gaussian stream addressed by (seed, key).
/// Each 128-bit Philox block yields two uniforms, Box-Muller turns them into
/// two normals; draw i lives in block i/2, so draws are O(1) random access.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, const NoiseKey& key);

  /// i-th standard normal of this stream.
  double normal(std::uint64_t i) const;

  /// i-th uniform on (0,1) of this stream (consumes the same blocks as
  /// normal(); do not mix indices between the two on one stream).
  double uniform(std::uint64_t i) const;

  /// First n standard normals as a vector.
  Eigen::VectorXd normals(Eigen::Index n) const;

 private:
  void block_values(std::uint64_t block, double& u0, double& u1) const;

  std::uint32_t key_[2];
  std::uint32_t base_[3];  // counter words 1..3; word 0 is the block index
};

}  // namespace mlek
