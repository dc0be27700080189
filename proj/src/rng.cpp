#include "mlek/rng.hpp"

#include <numbers>

namespace mlek {
namespace detail {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline void round_once(std::uint32_t x[4], const std::uint32_t k[2]) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mul_hi_lo(kPhiloxM0, x[0], hi0, lo0);
  mul_hi_lo(kPhiloxM1, x[2], hi1, lo1);
  const std::uint32_t y0 = hi1 ^ x[1] ^ k[0];
  const std::uint32_t y1 = lo1;
  const std::uint32_t y2 = hi0 ^ x[3] ^ k[1];
  const std::uint32_t y3 = lo0;
  x[0] = y0;
  x[1] = y1;
  x[2] = y2;
  x[3] = y3;
}

}  // namespace

PhiloxBlock philox4x32(const std::uint32_t counter[4], const std::uint32_t key[2]) {
  PhiloxBlock out{{counter[0], counter[1], counter[2], counter[3]}};
  std::uint32_t k[2] = {key[0], key[1]};
  for (int r = 0; r < 10; ++r) {
    round_once(out.x, k);
    k[0] += kPhiloxW0;
    k[1] += kPhiloxW1;
  }
  return out;
}

}  // namespace detail

NoiseStream::NoiseStream(std::uint64_t seed, const NoiseKey& key) {
  key_[0] = static_cast<std::uint32_t>(seed);
  key_[1] = static_cast<std::uint32_t>(seed >> 32);
  base_[0] = (static_cast<std::uint32_t>(key.substream) << 28) | (key.time_index & 0x0FFFFFFFu);
  base_[1] = (key.level << 24) | (key.replica & 0x00FFFFFFu);
  base_[2] = key.pair_index;
}

void NoiseStream::block_values(std::uint64_t block, double& u0, double& u1) const {
  const std::uint32_t counter[4] = {static_cast<std::uint32_t>(block), base_[0], base_[1], base_[2]};
  const detail::PhiloxBlock b = detail::philox4x32(counter, key_);
  const std::uint64_t w0 = (static_cast<std::uint64_t>(b.x[0]) << 32) | b.x[1];
  const std::uint64_t w1 = (static_cast<std::uint64_t>(b.x[2]) << 32) | b.x[3];
  // 53-bit mantissas, shifted off zero so log() below is always finite.
  u0 = static_cast<double>(w0 >> 11) * 0x1.0p-53 + 0x1.0p-54;
  u1 = static_cast<double>(w1 >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double NoiseStream::uniform(std::uint64_t i) const {
  double u0, u1;
  block_values(i / 2, u0, u1);
  return (i % 2 == 0) ? u0 : u1;
}

double NoiseStream::normal(std::uint64_t i) const {
  double u0, u1;
  block_values(i / 2, u0, u1);
  const double r = std::sqrt(-2.0 * std::log(u0));
  const double phi = 2.0 * std::numbers::pi * u1;
  return (i % 2 == 0) ? r * std::cos(phi) : r * std::sin(phi);
}

Eigen::VectorXd NoiseStream::normals(Eigen::Index n) const {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; i += 2) {
    double u0, u1;
    block_values(static_cast<std::uint64_t>(i) / 2, u0, u1);
    const double r = std::sqrt(-2.0 * std::log(u0));
    const double phi = 2.0 * std::numbers::pi * u1;
    out[i] = r * std::cos(phi);
    if (i + 1 < n) out[i + 1] = r * std::sin(phi);
  }
  return out;
}

}  // namespace mlek
