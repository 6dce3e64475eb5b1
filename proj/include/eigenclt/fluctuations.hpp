#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eigenclt/limit_measures.hpp"
#include "eigenclt/models.hpp"
#include "eigenclt/sde_engine.hpp"

namespace eigenclt {

// <x^k, L_N(t)> per (degree, stamp), row-major by degree.
struct EmpiricalMoments {
  std::vector<int> degrees;
  std::vector<double> grid;
  std::vector<double> values;
  double at(std::size_t d, std::size_t stamp) const { return values[d * grid.size() + stamp]; }
};

EmpiricalMoments empirical_moments(const Trajectory& traj, std::span<const int> degrees);

// Per-degree series on the trajectory grid, row-major by degree. Q and M are
// empty unless requested.
struct FluctuationSample {
  std::vector<int> degrees;
  std::vector<double> grid;
  std::vector<double> L;
  std::vector<double> Q;
  std::vector<double> M;
  std::size_t stamps() const { return grid.size(); }
  double L_at(std::size_t d, std::size_t k) const { return L[d * grid.size() + k]; }
};

FluctuationSample fluctuation(const Trajectory& traj, const MomentCurve& curve,
                              std::span<const int> degrees);

// Q_t^N(x^n) on the trajectory grid; time integrals by trapezoid.
std::vector<double> centered_process(const Trajectory& traj, const MomentCurve& curve,
                                     const LimitKernels& kernels, int degree);

// N M^N_{x^n}(t): left-point stochastic integral of f'(lambda_i) sigma(lambda_i) dW_i.
std::vector<double> martingale_part(const Trajectory& traj, const ModelSpec& spec, int degree);

struct QuadraticVariation {
  double realized = 0.0;   // sum of squared increments of N M
  double predicted = 0.0;  // sum over steps of <(f')^2 * N sigma^2, L_N> h
};

QuadraticVariation martingale_qv(const Trajectory& traj, const ModelSpec& spec, int degree);

// K(m, t; n, s) = m n int_0^{t ^ s} <x^{m+n-2} rho(x), mu_u> du with rho the
// bracket density (2 G(x,x) or sigma_tilde^2).
class CovarianceKernel {
 public:
  CovarianceKernel(Quadratic density, const MomentCurve& curve, std::string label);

  double operator()(int m, double t, int n, double s) const;
  int max_pair_degree() const { return max_sum_ + 2; }
  const std::string& label() const { return label_; }

 private:
  double integral(int j, double t) const;

  Quadratic density_;
  std::vector<double> grid_;
  std::vector<double> cumulative_;  // (stamp, j) row-major, j = 0..K
  std::vector<double> moments_;
  int K_ = 0;
  int max_sum_ = 0;  // largest admissible m + n - 2
  std::string label_;
};

CovarianceKernel covariance_kernel(ModelKind kind, const MomentCurve& curve);
CovarianceKernel covariance_kernel(const LimitKernels& kernels, const MomentCurve& curve);

// Joint draws of {G_t(x^n)} over (degree x grid); sample r is
// values[r * (D * T) + d * T + k].
struct GaussianFamilySamples {
  std::vector<int> degrees;
  std::vector<double> grid;
  std::size_t draws = 0;
  std::vector<double> values;
  std::span<const double> draw(std::size_t r) const {
    const std::size_t w = degrees.size() * grid.size();
    return {values.data() + r * w, w};
  }
};

std::vector<double> family_covariance(const CovarianceKernel& kernel,
                                      std::span<const int> degrees,
                                      std::span<const double> grid);

GaussianFamilySamples synthesize_gaussian_family(const CovarianceKernel& kernel,
                                                 std::span<const int> degrees,
                                                 std::span<const double> grid, std::size_t draws,
                                                 std::uint64_t seed);

// Limit fluctuation paths for degrees 0..max_degree on the family grid,
// row-major by degree. l0[n] is the initial fluctuation of x^n; the family
// path gauss is laid out as in GaussianFamilySamples::draw with the given
// degree list, which must contain 1..max_degree.
struct LimitPaths {
  int max_degree = 0;
  std::vector<double> grid;
  std::vector<double> values;
  double at(int n, std::size_t k) const { return values[n * grid.size() + k]; }
};

LimitPaths limit_fluctuation_recursion(ModelKind kind, double c, std::span<const double> l0,
                                       std::span<const double> gauss,
                                       std::span<const int> gauss_degrees,
                                       std::span<const double> grid, const MomentCurve& curve,
                                       int max_degree);

// Mean and covariance of (L_t(x), ..., L_t(x^max_degree)) at grid[stamp]
// under the recursion with deterministic initial fluctuations l0, obtained by
// propagating the family covariance through the (affine) recursion.
struct RecursionLaw {
  int max_degree = 0;
  std::vector<double> mean;
  std::vector<double> cov;
  double cov_at(int m, int n) const { return cov[(m - 1) * max_degree + (n - 1)]; }
};

RecursionLaw recursion_law(ModelKind kind, double c, std::span<const double> l0,
                          const CovarianceKernel& kernel, std::span<const double> grid,
                          const MomentCurve& curve, int max_degree, std::size_t stamp);

void write_fluctuation_csv(const std::vector<FluctuationSample>& samples,
                           std::span<const std::size_t> stamps, const std::string& path);

}  // namespace eigenclt
