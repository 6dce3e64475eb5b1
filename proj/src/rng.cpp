#include "eigenclt/rng.hpp"

#include <cmath>
#include <numbers>

namespace eigenclt {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

// Uniform draws live in the upper half of the node space.
constexpr std::uint32_t kUniformNodeBit = 0x80000000u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double to_unit_open0(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;  // 53 bits
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

CounterRng::CounterRng(std::uint64_t seed, Domain domain) {
  const std::uint64_t k =
      splitmix64(seed ^ (static_cast<std::uint64_t>(domain) * 0xA24BAED4963EE407ull));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

PhiloxCounter CounterRng::block(std::uint32_t replica, std::uint32_t index,
                                std::uint32_t step, std::uint32_t node) const {
  return philox4x32_10({replica, index, step, node}, key_);
}

std::array<double, 2> CounterRng::normal_pair(std::uint32_t replica, std::uint32_t index,
                                              std::uint32_t step, std::uint32_t node) const {
  const auto r = block(replica, index, step, node);
  const double u1 = to_unit_open0(r[0], r[1]);
  const double u2 = to_unit_open0(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

void CounterRng::fill_normals(std::uint32_t replica, std::uint32_t step, std::uint32_t node,
                              std::span<double> out) const {
  const std::size_t n = out.size();
  for (std::size_t k = 0; 2 * k < n; ++k) {
    const auto z = normal_pair(replica, static_cast<std::uint32_t>(k), step, node);
    out[2 * k] = z[0];
    if (2 * k + 1 < n) out[2 * k + 1] = z[1];
  }
}

std::array<double, 2> CounterRng::uniform_pair(std::uint32_t replica, std::uint32_t index,
                                               std::uint32_t step, std::uint32_t node) const {
  const auto r = block(replica, index, step, node | kUniformNodeBit);
  return {to_unit_open0(r[0], r[1]), to_unit_open0(r[2], r[3])};
}

double NormalStream::next() {
  if (has_cached_) {
    has_cached_ = false;
    return cache_[1];
  }
  cache_ = rng_.normal_pair(replica_, index_++, step_, node_);
  has_cached_ = true;
  return cache_[0];
}

double NormalStream::next_uniform() {
  // One uniform per counter value keeps the sequence simple to reason about.
  return rng_.uniform_pair(replica_, uindex_++, step_, node_)[0];
}

}  // namespace eigenclt
