#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eigenclt {

enum class ModelKind {
  GeneralizedWishart,
  ParticleSystem,
  Wishart,
  WishartDrifted,
  Dyson,
  DysonDrifted,
  OrnsteinUhlenbeck,
  OUDrifted,
};

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

using ParamMap = std::map<std::string, double>;

// Polynomial a0 + a1 x + a2 x^2.
struct Quadratic {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0;
  double operator()(double x) const { return a0 + x * (a1 + x * a2); }
};

// Symmetric kernel k0 + k1 (x + y) + k2 x y.
struct SymmetricBilinear {
  double k0 = 0.0, k1 = 0.0, k2 = 0.0;
  double operator()(double x, double y) const { return k0 + k1 * (x + y) + k2 * (x * y); }
};

// Drift b(x) = b0 + b1 x.
struct LinearDrift {
  double b0 = 0.0, b1 = 0.0;
  double operator()(double x) const { return b0 + b1 * x; }
};

struct LimitKernels {
  LinearDrift b;
  SymmetricBilinear G;
  // sigma_tilde^2 for particle systems; zero for eigenvalue systems.
  Quadratic sigma_tilde_sq;
  double cov_multiplier = 2.0;

  // Density of the martingale bracket: 2 G(x,x) for eigenvalue systems,
  // sigma_tilde^2 for particle systems.
  Quadratic bracket_density() const;
  double sigma_tilde(double x) const;
};

// Time-dependent wrapper used by the stationarity lemmas:
//   drift(t, x)     = (base_drift(x) + kappa x) / (t + a)
//   diffusion(t, x) = base_diffusion(x) / sqrt(t + a)
struct TimeScaling {
  double a = 1.0;
  double kappa = 0.0;
};

class ModelSpec {
 public:
  ModelKind kind = ModelKind::Dyson;
  int n_particles = 1;
  ParamMap params;

  // Finite-N coefficients. Diffusion^2 = diff_sq(x) / N, G_N = G(x,y) / N.
  LinearDrift drift_poly;
  double drift_eps = 0.0;  // amplitude of eps sin(x) / N^{3/2}
  Quadratic diff_sq;
  SymmetricBilinear interaction_poly;
  bool nonnegative = false;
  std::optional<TimeScaling> scaling;

  double diffusion_per_particle(double x) const;
  double drift_b(double x) const;
  double interaction_kernel(double x, double y) const;

  double diffusion_at(double t, double x) const;
  double drift_b_at(double t, double x) const;
  double time_factor(double t) const;

  bool is_wishart_kind() const;
  bool is_particle_system() const { return kind == ModelKind::ParticleSystem; }
};

ModelSpec build_model(ModelKind kind, int n_particles, const ParamMap& params);
LimitKernels limit_kernels(const ModelSpec& spec);

// b_N(x_i) + sum_{j != i} G_N(x_i, x_j) / (x_i - x_j) at time 0 (or the
// spec's scaled time t).
std::vector<double> eval_drift(const ModelSpec& spec, std::span<const double> positions,
                               double t = 0.0);
void eval_drift_into(const ModelSpec& spec, std::span<const double> positions, double t,
                     std::span<double> out);

// Same kernels (diffusion and interaction) so a shared noise source drives
// both systems in the same way.
bool same_noise_structure(const ModelSpec& a, const ModelSpec& b);

}  // namespace eigenclt
