#include "eigenclt/models.hpp"

#include <cmath>

#include "eigenclt/error.hpp"

namespace eigenclt {

namespace {

struct KindName {
  ModelKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {ModelKind::GeneralizedWishart, "GeneralizedWishart"},
    {ModelKind::ParticleSystem, "ParticleSystem"},
    {ModelKind::Wishart, "Wishart"},
    {ModelKind::WishartDrifted, "WishartDrifted"},
    {ModelKind::Dyson, "Dyson"},
    {ModelKind::DysonDrifted, "DysonDrifted"},
    {ModelKind::OrnsteinUhlenbeck, "OrnsteinUhlenbeck"},
    {ModelKind::OUDrifted, "OUDrifted"},
};

double get(const ParamMap& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

bool has(const ParamMap& p, const std::string& key) { return p.count(key) != 0; }

void require_finite(const ParamMap& p) {
  for (const auto& [k, v] : p)
    if (!std::isfinite(v)) fail(ErrorCode::InvalidParams, "parameter '" + k + "' is not finite");
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  for (const auto& kn : kKindNames)
    if (kn.kind == kind) return kn.name;
  return "Unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  for (const auto& kn : kKindNames)
    if (kn.name == name) return kn.kind;
  if (name == "OU") return ModelKind::OrnsteinUhlenbeck;
  fail(ErrorCode::UnknownKind, "model kind '" + std::string(name) + "'");
}

Quadratic LimitKernels::bracket_density() const {
  if (cov_multiplier == 1.0) return sigma_tilde_sq;
  return {2.0 * G.k0, 4.0 * G.k1, 2.0 * G.k2};
}

double LimitKernels::sigma_tilde(double x) const {
  return std::sqrt(std::max(0.0, sigma_tilde_sq(x)));
}

double ModelSpec::diffusion_per_particle(double x) const {
  if (nonnegative && x < 0.0) x = 0.0;
  return std::sqrt(std::max(0.0, diff_sq(x)) / n_particles);
}

double ModelSpec::drift_b(double x) const {
  double b = drift_poly(x);
  if (drift_eps != 0.0) b += drift_eps * std::sin(x) / std::pow(double(n_particles), 1.5);
  return b;
}

double ModelSpec::interaction_kernel(double x, double y) const {
  return interaction_poly(x, y) / n_particles;
}

double ModelSpec::time_factor(double t) const {
  return scaling ? 1.0 / (t + scaling->a) : 1.0;
}

double ModelSpec::diffusion_at(double t, double x) const {
  const double d = diffusion_per_particle(x);
  return scaling ? d / std::sqrt(t + scaling->a) : d;
}

double ModelSpec::drift_b_at(double t, double x) const {
  if (!scaling) return drift_b(x);
  return (drift_b(x) + scaling->kappa * x) / (t + scaling->a);
}

bool ModelSpec::is_wishart_kind() const {
  return kind == ModelKind::Wishart || kind == ModelKind::WishartDrifted;
}

ModelSpec build_model(ModelKind kind, int n_particles, const ParamMap& params) {
  if (n_particles < 1) fail(ErrorCode::InvalidParams, "n_particles must be >= 1");
  require_finite(params);
  ModelSpec s;
  s.kind = kind;
  s.n_particles = n_particles;
  s.params = params;
  const double N = n_particles;
  const double eps = get(params, "eps", 1.0);

  switch (kind) {
    case ModelKind::Wishart: {
      double P;
      if (has(params, "P")) {
        P = params.at("P");
        if (!(P > N - 1)) fail(ErrorCode::InvalidParams, "Wishart requires P > N-1");
      } else if (has(params, "c")) {
        const double c = params.at("c");
        if (!(c >= 1.0)) fail(ErrorCode::InvalidParams, "Wishart requires c >= 1");
        P = c * N;
      } else {
        fail(ErrorCode::InvalidParams, "Wishart requires P or c");
      }
      s.params["P"] = P;
      s.params["c"] = P / N;
      s.drift_poly = {P / N, 0.0};
      s.diff_sq = {0.0, 4.0, 0.0};
      s.interaction_poly = {0.0, 1.0, 0.0};
      s.nonnegative = true;
      break;
    }
    case ModelKind::WishartDrifted: {
      const double c = get(params, "c", 1.0);
      if (!(c >= 1.0)) fail(ErrorCode::InvalidParams, "WishartDrifted requires c >= 1");
      s.params["c"] = c;
      s.params["eps"] = eps;
      s.drift_poly = {c, 0.0};
      s.drift_eps = eps;
      s.diff_sq = {0.0, 4.0, 0.0};
      s.interaction_poly = {0.0, 1.0, 0.0};
      s.nonnegative = true;
      break;
    }
    case ModelKind::Dyson:
      s.diff_sq = {2.0, 0.0, 0.0};
      s.interaction_poly = {1.0, 0.0, 0.0};
      break;
    case ModelKind::DysonDrifted: {
      const double c = get(params, "c", 0.0);
      s.params["c"] = c;
      s.params["eps"] = eps;
      s.drift_poly = {c, 0.0};
      s.drift_eps = eps;
      s.diff_sq = {2.0, 0.0, 0.0};
      s.interaction_poly = {1.0, 0.0, 0.0};
      break;
    }
    case ModelKind::OrnsteinUhlenbeck:
      s.drift_poly = {0.0, -0.5};
      s.diff_sq = {1.0, 0.0, 0.0};
      s.interaction_poly = {0.5, 0.0, 0.0};
      break;
    case ModelKind::OUDrifted: {
      const double c = get(params, "c", 0.0);
      s.params["c"] = c;
      s.params["eps"] = eps;
      s.drift_poly = {c, -0.5};
      s.drift_eps = eps;
      s.diff_sq = {1.0, 0.0, 0.0};
      s.interaction_poly = {0.5, 0.0, 0.0};
      break;
    }
    case ModelKind::GeneralizedWishart: {
      // g_N^2(x) = (g0 + g1 x) / N, h_N^2(x) = h0 + h1 x.
      const double g0 = get(params, "g0", 0.5), g1 = get(params, "g1", 0.0);
      const double h0 = get(params, "h0", 1.0), h1 = get(params, "h1", 0.0);
      if (g0 < 0 || g1 < 0 || h0 < 0 || h1 < 0)
        fail(ErrorCode::InvalidParams, "GeneralizedWishart requires g0, g1, h0, h1 >= 0");
      s.drift_poly = {get(params, "b0", 0.0), get(params, "b1", 0.0)};
      s.diff_sq = {4.0 * g0 * h0, 4.0 * (g0 * h1 + g1 * h0), 4.0 * g1 * h1};
      s.interaction_poly = {2.0 * g0 * h0, g0 * h1 + g1 * h0, 2.0 * g1 * h1};
      s.nonnegative = g1 > 0 || h1 > 0;
      break;
    }
    case ModelKind::ParticleSystem: {
      // sigma^N(x)^2 = (s0 + s1 x) / N, H_N = (k0 + k1 (x + y)) / N.
      const double s0 = get(params, "s0", 2.0), s1 = get(params, "s1", 0.0);
      const double k0 = get(params, "k0", 1.0), k1 = get(params, "k1", 0.0);
      if (s0 < 0 || s1 < 0 || k0 < 0 || k1 < 0)
        fail(ErrorCode::InvalidParams, "ParticleSystem requires s0, s1, k0, k1 >= 0");
      s.drift_poly = {get(params, "b0", 0.0), get(params, "b1", 0.0)};
      s.diff_sq = {s0, s1, 0.0};
      s.interaction_poly = {k0, k1, 0.0};
      s.nonnegative = s1 > 0 || k1 > 0;
      break;
    }
    default:
      fail(ErrorCode::UnknownKind, "unsupported model kind");
  }
  return s;
}

LimitKernels limit_kernels(const ModelSpec& spec) {
  LimitKernels k;
  k.b = spec.drift_poly;
  k.G = spec.interaction_poly;
  if (spec.is_particle_system()) {
    k.sigma_tilde_sq = spec.diff_sq;
    k.cov_multiplier = 1.0;
  }
  return k;
}

void eval_drift_into(const ModelSpec& spec, std::span<const double> x, double t,
                     std::span<double> out) {
  const std::size_t n = x.size();
  const double invN = 1.0 / spec.n_particles;
  const auto& K = spec.interaction_poly;
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double xi = x[i];
    const double a = K.k0 + K.k1 * xi;
    const double bcoef = K.k1 + K.k2 * xi;
    double acc = 0.0;
    if (x[i + 1] == xi) fail(ErrorCode::CollidingState, "zero gap at index " + std::to_string(i));
    // term_ij = G(x_i, x_j) / (x_i - x_j) is antisymmetric in (i, j).
#pragma omp simd reduction(+ : acc)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double term = (a + bcoef * x[j]) / (xi - x[j]);
      acc += term;
      out[j] -= term;
    }
    out[i] += acc;
  }

  const double f = spec.time_factor(t);
  for (std::size_t i = 0; i < n; ++i) {
    double b = spec.drift_b(x[i]);
    if (spec.scaling) b += spec.scaling->kappa * x[i];
    out[i] = f * (b + out[i] * invN);
  }
}

std::vector<double> eval_drift(const ModelSpec& spec, std::span<const double> positions,
                               double t) {
  for (std::size_t i = 0; i + 1 < positions.size(); ++i)
    if (positions[i + 1] == positions[i])
      fail(ErrorCode::CollidingState, "zero gap at index " + std::to_string(i));
  std::vector<double> out(positions.size());
  eval_drift_into(spec, positions, t, out);
  return out;
}

bool same_noise_structure(const ModelSpec& a, const ModelSpec& b) {
  return a.n_particles == b.n_particles && a.diff_sq.a0 == b.diff_sq.a0 &&
         a.diff_sq.a1 == b.diff_sq.a1 && a.diff_sq.a2 == b.diff_sq.a2 &&
         a.interaction_poly.k0 == b.interaction_poly.k0 &&
         a.interaction_poly.k1 == b.interaction_poly.k1 &&
         a.interaction_poly.k2 == b.interaction_poly.k2 &&
         a.nonnegative == b.nonnegative &&
         a.scaling.has_value() == b.scaling.has_value();
}

}  // namespace eigenclt
