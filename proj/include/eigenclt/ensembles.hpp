#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "eigenclt/models.hpp"
#include "eigenclt/sde_engine.hpp"

namespace eigenclt {

struct EnsembleSample {
  std::vector<double> positions;
  std::string kind;  // "ScaledLaguerre" or "ScaledGOE"
  int p = 0;
};

// Eigenvalues of G^T G / N with G a P x N standard normal matrix.
EnsembleSample sample_scaled_laguerre(int n, int p, std::uint64_t seed,
                                      std::uint32_t replica = 0);
// Eigenvalues of a symmetric matrix with off-diagonal variance 1/N and
// diagonal variance 2/N.
EnsembleSample sample_scaled_goe(int n, std::uint64_t seed, std::uint32_t replica = 0);

enum class InitialKind { Zero, Ensemble, DominatedEnsemble, Explicit };

InitialKind parse_initial_kind(std::string_view name);
std::string_view to_string(InitialKind kind);

struct InitialParams {
  double a = 1.0;
  double b = 0.0;
  std::vector<double> values;
};

// Ensemble draws use the Laguerre law (with the model's P) for Wishart kinds
// and the GOE law otherwise.
std::vector<double> make_initial(InitialKind kind, const ModelSpec& spec,
                                 const InitialParams& params, std::uint64_t seed,
                                 std::uint32_t replica = 0);

// Law of the particles at time t0 > 0 when started from the collided state
// at the origin, for the kinds where it is known in closed form.
std::vector<double> entrance_sample(const ModelSpec& spec, double t0, std::uint64_t seed,
                                    std::uint32_t replica = 0);
bool has_entrance_law(const ModelSpec& spec);

// Simulates from the all-zero state: the first grid step is drawn from the
// entrance law, the rest by the engine. The noise row of the first step is
// zero (the entrance draw does not expose its Brownian path).
Trajectory simulate_from_zero(const ModelSpec& spec, double horizon, const StepControl& control,
                              std::uint64_t seed, bool record_noise, std::uint32_t replica = 0);

// The time-changed system of the stationarity lemmas with offset a.
ModelSpec time_scaled(const ModelSpec& spec, double a);

}  // namespace eigenclt
