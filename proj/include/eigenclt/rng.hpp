#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace eigenclt {

// Philox4x32-10 counter-based generator. Every random number in the library
// is a pure function of (seed, domain, replica, index, step, node), so results
// do not depend on thread scheduling or on the order in which replicas run.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

// Independent key spaces for the different consumers of randomness.
enum class Domain : std::uint32_t {
  SdeNoise = 1,
  BridgeSplit = 2,
  Ensemble = 3,
  MatrixOracle = 4,
  InitialCondition = 5,
  GaussianFamily = 6,
  Bootstrap = 7,
  Scratch = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

// uint32 pair -> double in (0, 1], 53 bits.
double to_unit_open0(std::uint32_t hi, std::uint32_t lo);

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Domain domain);

  PhiloxCounter block(std::uint32_t replica, std::uint32_t index, std::uint32_t step,
                      std::uint32_t node) const;

  // Two independent standard normals (Box-Muller) from one counter value.
  std::array<double, 2> normal_pair(std::uint32_t replica, std::uint32_t index,
                                    std::uint32_t step, std::uint32_t node) const;

  // out[i] is the draw for particle i; particles 2k and 2k+1 share counter k.
  void fill_normals(std::uint32_t replica, std::uint32_t step, std::uint32_t node,
                    std::span<double> out) const;

  std::array<double, 2> uniform_pair(std::uint32_t replica, std::uint32_t index,
                                     std::uint32_t step, std::uint32_t node) const;

 private:
  PhiloxKey key_;
};

// Sequential view of one (replica, step, node) stream, for bulk sampling such
// as dense Gaussian matrices. Draw i comes from counter index i / 2.
class NormalStream {
 public:
  NormalStream(const CounterRng& rng, std::uint32_t replica, std::uint32_t step,
               std::uint32_t node = 0)
      : rng_(rng), replica_(replica), step_(step), node_(node) {}

  double next();
  double next_uniform();

 private:
  const CounterRng& rng_;
  std::uint32_t replica_;
  std::uint32_t step_;
  std::uint32_t node_;
  std::uint32_t index_ = 0;
  std::array<double, 2> cache_{};
  bool has_cached_ = false;
  std::uint32_t uindex_ = 0;
};

}  // namespace eigenclt
