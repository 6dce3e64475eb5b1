#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eigenclt/models.hpp"

namespace eigenclt {

struct ParticleState {
  double time = 0.0;
  std::vector<double> positions;
};

struct StepControl {
  double dt = 1e-3;
  // <= 0 selects the default 1e-8 * (1 + spread of init).
  double min_gap = 0.0;
  int max_substeps = 20;
  // Every base step is split into 2^min_depth sub-steps along the Brownian
  // bridge before any proposal is tried; the stored grid is unchanged.
  int min_depth = 0;
  bool clamp_nonnegative = true;
  // When the halving budget is exhausted: saturate the pair interaction
  // (true) or throw MaxSubstepsExceeded (false).
  bool saturate = true;
  // Pair denominators |x_i - x_j| are floored at tame * sqrt(h) * (s_i + s_j) / 2,
  // s the per-particle diffusion and h the (sub)step. This bounds the Euler
  // kick of a nearly colliding pair by the local noise scale and vanishes as
  // h -> 0. Zero disables it (floor = min_gap only).
  double tame = 1.0;
  // Heun averages the drift at the start and at the Euler predictor; the
  // diffusion stays at the left point (Ito).
  enum class Scheme { Euler, Heun } scheme = Scheme::Heun;
};

// Positions are stored row-major: states[k * N + i].
struct Trajectory {
  int n_particles = 0;
  std::vector<double> grid;
  std::vector<double> states;
  // Brownian increment of each particle over each base step, row-major.
  std::vector<double> noise;
  bool has_noise = false;
  std::uint64_t seed = 0;
  std::uint32_t replica = 0;
  // Total number of accepted sub-steps and saturated steps, for diagnostics.
  std::uint64_t substeps = 0;
  std::uint64_t saturations = 0;

  std::size_t size() const { return grid.size(); }
  std::span<const double> state(std::size_t k) const {
    return {states.data() + k * n_particles, static_cast<std::size_t>(n_particles)};
  }
  std::span<double> state(std::size_t k) {
    return {states.data() + k * n_particles, static_cast<std::size_t>(n_particles)};
  }
  std::span<const double> increment(std::size_t step) const {
    return {noise.data() + step * n_particles, static_cast<std::size_t>(n_particles)};
  }
};

// One plain Euler-Maruyama step followed by clamping (Wishart kinds) and
// re-sorting. noise holds the Brownian increments, not standard normals.
ParticleState step(const ModelSpec& spec, const ParticleState& state, double dt,
                   std::span<const double> noise, bool clamp_nonnegative = true);

// Base time grid 0, dt, 2dt, ..., T (last step truncated at T).
std::vector<double> time_grid(double horizon, double dt);

double default_min_gap(std::span<const double> init);

Trajectory simulate(const ModelSpec& spec, std::span<const double> init, double horizon,
                    const StepControl& control, std::uint64_t seed, bool record_noise,
                    std::uint32_t replica = 0);

std::pair<Trajectory, Trajectory> coupled_simulate(const ModelSpec& spec_low,
                                                   const ModelSpec& spec_high,
                                                   std::span<const double> init_low,
                                                   std::span<const double> init_high,
                                                   double horizon, const StepControl& control,
                                                   std::uint64_t seed, std::uint32_t replica = 0);

struct OrderingReport {
  double fraction = 1.0;
  std::size_t pairs = 0;
  std::size_t violations = 0;
  bool has_violation = false;
  double first_time = 0.0;
  int first_index = -1;
};

OrderingReport check_ordering(const Trajectory& low, const Trajectory& high);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace eigenclt
