#pragma once

#include <span>
#include <string>
#include <vector>

#include "eigenclt/models.hpp"

namespace eigenclt {

constexpr int kMaxDegree = 12;

enum class Provenance { HierarchyODE, ClosedForm };

// m_k(t) for k = 0..K on a time grid; values are row-major (stamp, degree).
struct MomentCurve {
  int K = 0;
  std::vector<double> grid;
  std::vector<double> values;
  Provenance provenance = Provenance::HierarchyODE;

  double at(int k, std::size_t stamp) const { return values[stamp * (K + 1) + k]; }
  std::span<const double> row(std::size_t stamp) const {
    return {values.data() + stamp * (K + 1), static_cast<std::size_t>(K + 1)};
  }
  // Linear interpolation in t; exact at grid stamps.
  double value(int k, double t) const;
};

// Right-hand side of the moment hierarchy for polynomial b and G.
void moment_derivative(const LimitKernels& kernels, std::span<const double> m,
                       std::span<double> dm);

MomentCurve evolve_moments(const LimitKernels& kernels, std::span<const double> init,
                           double horizon, double dt, int K);

std::vector<double> semicircle_moments(int K, double t);
std::vector<double> mp_moments(int K, double c, double t);

// Moments of the empirical measure of a point configuration.
std::vector<double> point_moments(std::span<const double> x, int K);

void write_moment_csv(const MomentCurve& curve, const std::string& path);

}  // namespace eigenclt
