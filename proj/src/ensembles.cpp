#include "eigenclt/ensembles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "eigenclt/error.hpp"
#include "eigenclt/matrix_oracle.hpp"
#include "eigenclt/rng.hpp"

namespace eigenclt {

namespace {

constexpr std::uint64_t kEntranceSalt = 0x5bd1e9955bd1e995ull;

void require_laguerre_params(int n, int p) {
  if (n < 1) fail(ErrorCode::InvalidParams, "N must be >= 1");
  if (!(p > n - 1)) fail(ErrorCode::InvalidParams, "Laguerre requires P > N-1");
}

// chi^2 with an integer number of degrees of freedom, as a sum of squares.
double chi_square(NormalStream& z, int dof) {
  double s = 0.0;
  for (int k = 0; k < dof; ++k) {
    const double v = z.next();
    s += v * v;
  }
  return s;
}

std::vector<double> tridiagonal_eigenvalues(const Eigen::VectorXd& diag,
                                            const Eigen::VectorXd& sub) {
  if (diag.size() == 1) return {diag(0)};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    fail(ErrorCode::NoConvergence, "tridiagonal eigensolver failed");
  std::vector<double> ev(solver.eigenvalues().data(),
                         solver.eigenvalues().data() + solver.eigenvalues().size());
  std::sort(ev.begin(), ev.end());
  return ev;
}

// Tridiagonal models with the same eigenvalue laws as the dense samplers
// (beta = 1 Hermite and Laguerre ensembles). O(N^2) instead of O(N^3).
std::vector<double> goe_tridiagonal(int n, const CounterRng& rng, std::uint32_t replica,
                                    std::uint32_t node) {
  NormalStream z(rng, replica, 0, node);
  Eigen::VectorXd d(n), e(std::max(n - 1, 0));
  const double s = std::sqrt(2.0 / n);
  for (int i = 0; i < n; ++i) d(i) = s * z.next();  // N(0,1) scaled
  for (int i = 0; i + 1 < n; ++i) e(i) = s * std::sqrt(0.5 * chi_square(z, n - 1 - i));
  return tridiagonal_eigenvalues(d, e);
}

std::vector<double> laguerre_tridiagonal(int n, int p, const CounterRng& rng,
                                         std::uint32_t replica, std::uint32_t node) {
  NormalStream z(rng, replica, 0, node);
  // B lower bidiagonal: diagonal chi_{P-i}, subdiagonal chi_{N-1-i}.
  std::vector<double> bd(n), be(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) bd[i] = std::sqrt(chi_square(z, p - i));
  for (int i = 0; i + 1 < n; ++i) be[i] = std::sqrt(chi_square(z, n - 1 - i));
  Eigen::VectorXd d(n), e(std::max(n - 1, 0));
  for (int i = 0; i < n; ++i) d(i) = (bd[i] * bd[i] + (i > 0 ? be[i - 1] * be[i - 1] : 0.0)) / n;
  for (int i = 0; i + 1 < n; ++i) e(i) = bd[i] * be[i] / n;
  auto ev = tridiagonal_eigenvalues(d, e);
  for (auto& v : ev) v = std::max(v, 0.0);
  return ev;
}

int wishart_p(const ModelSpec& spec) {
  double p = spec.params.count("P") ? spec.params.at("P")
                                    : spec.params.at("c") * spec.n_particles;
  const double r = std::round(p);
  if (std::abs(p - r) > 1e-9)
    fail(ErrorCode::InvalidParams,
         "ensemble draws need an integer P = c N, got " + std::to_string(p));
  return static_cast<int>(r);
}

void strictly_increase(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) v[i] = std::nextafter(v[i - 1], INFINITY);
}

}  // namespace

EnsembleSample sample_scaled_laguerre(int n, int p, std::uint64_t seed, std::uint32_t replica) {
  require_laguerre_params(n, p);
  const CounterRng rng(seed, Domain::Ensemble);
  NormalStream z(rng, replica, 0);
  std::vector<double> g(static_cast<std::size_t>(p) * n);
  for (auto& v : g) v = z.next();
  SymmetricMatrix x(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int r = 0; r < p; ++r) s += g[r * n + i] * g[r * n + j];
      x.at(i, j) = s / n;
    }
  auto ev = jacobi_eigenvalues(x);
  for (auto& v : ev) v = std::max(v, 0.0);
  return {std::move(ev), "ScaledLaguerre", p};
}

EnsembleSample sample_scaled_goe(int n, std::uint64_t seed, std::uint32_t replica) {
  if (n < 1) fail(ErrorCode::InvalidParams, "N must be >= 1");
  const CounterRng rng(seed, Domain::Ensemble);
  NormalStream z(rng, replica, 0);
  SymmetricMatrix x(n);
  const double off = std::sqrt(1.0 / n), diag = std::sqrt(2.0 / n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) x.at(i, j) = (i == j ? diag : off) * z.next();
  return {jacobi_eigenvalues(x), "ScaledGOE", 0};
}

InitialKind parse_initial_kind(std::string_view name) {
  if (name == "Zero") return InitialKind::Zero;
  if (name == "Ensemble") return InitialKind::Ensemble;
  if (name == "DominatedEnsemble") return InitialKind::DominatedEnsemble;
  if (name == "Explicit") return InitialKind::Explicit;
  fail(ErrorCode::ConfigError, "initial.kind '" + std::string(name) + "'");
}

std::string_view to_string(InitialKind kind) {
  switch (kind) {
    case InitialKind::Zero: return "Zero";
    case InitialKind::Ensemble: return "Ensemble";
    case InitialKind::DominatedEnsemble: return "DominatedEnsemble";
    case InitialKind::Explicit: return "Explicit";
  }
  return "Unknown";
}

std::vector<double> make_initial(InitialKind kind, const ModelSpec& spec,
                                 const InitialParams& params, std::uint64_t seed,
                                 std::uint32_t replica) {
  const int n = spec.n_particles;
  switch (kind) {
    case InitialKind::Zero:
      return std::vector<double>(n, 0.0);
    case InitialKind::Explicit: {
      if (static_cast<int>(params.values.size()) != n)
        fail(ErrorCode::InvalidParams, "explicit initial values must have N entries");
      auto v = params.values;
      std::sort(v.begin(), v.end());
      return v;
    }
    case InitialKind::Ensemble:
    case InitialKind::DominatedEnsemble: {
      const CounterRng rng(seed, Domain::Ensemble);
      const bool wishart = spec.is_wishart_kind();
      auto xi = wishart ? laguerre_tridiagonal(n, wishart_p(spec), rng, replica, 0)
                        : goe_tridiagonal(n, rng, replica, 0);
      if (kind == InitialKind::Ensemble) return xi;
      if (!(params.a > 0.0) || params.b < 0.0)
        fail(ErrorCode::InvalidParams, "dominated ensemble needs a > 0, b >= 0");
      const CounterRng urng(seed, Domain::InitialCondition);
      for (int i = 0; i < n; ++i) {
        const double u = urng.uniform_pair(replica, static_cast<std::uint32_t>(i), 0, 0)[0];
        if (wishart)
          xi[i] = params.a * xi[i] * u;
        else
          xi[i] = std::sqrt(params.a) * xi[i] + params.b * (2.0 * u - 1.0);
      }
      std::sort(xi.begin(), xi.end());
      return xi;
    }
  }
  fail(ErrorCode::InvalidParams, "unknown initial kind");
}

bool has_entrance_law(const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::Dyson:
    case ModelKind::DysonDrifted:
    case ModelKind::OrnsteinUhlenbeck:
    case ModelKind::OUDrifted:
    case ModelKind::Wishart:
    case ModelKind::WishartDrifted:
      return !spec.scaling.has_value();
    default:
      return false;
  }
}

std::vector<double> entrance_sample(const ModelSpec& spec, double t0, std::uint64_t seed,
                                    std::uint32_t replica) {
  if (!has_entrance_law(spec))
    fail(ErrorCode::InvalidInit, "no entrance law from the collided state for " +
                                     std::string(to_string(spec.kind)));
  if (!(t0 > 0.0)) fail(ErrorCode::InvalidParams, "entrance time must be > 0");
  const int n = spec.n_particles;
  const CounterRng rng(seed ^ kEntranceSalt, Domain::InitialCondition);
  std::vector<double> x;
  const double c = spec.params.count("c") ? spec.params.at("c") : 0.0;
  switch (spec.kind) {
    case ModelKind::Dyson:
    case ModelKind::DysonDrifted:
      x = goe_tridiagonal(n, rng, replica, 1);
      for (auto& v : x) v = std::sqrt(t0) * v + (spec.kind == ModelKind::DysonDrifted ? c * t0 : 0.0);
      break;
    case ModelKind::OrnsteinUhlenbeck:
    case ModelKind::OUDrifted: {
      x = goe_tridiagonal(n, rng, replica, 1);
      const double scale = std::sqrt(-std::expm1(-t0) / 2.0);
      const double shift =
          spec.kind == ModelKind::OUDrifted ? -2.0 * c * std::expm1(-0.5 * t0) : 0.0;
      for (auto& v : x) v = scale * v + shift;
      break;
    }
    default:  // Wishart kinds
      x = laguerre_tridiagonal(n, wishart_p(spec), rng, replica, 1);
      for (auto& v : x) v *= t0;
      break;
  }
  strictly_increase(x);
  return x;
}

Trajectory simulate_from_zero(const ModelSpec& spec, double horizon, const StepControl& control,
                              std::uint64_t seed, bool record_noise, std::uint32_t replica) {
  const int n = spec.n_particles;
  if (n == 1 || horizon == 0.0) {
    std::vector<double> zero(n, 0.0);
    return simulate(spec, zero, horizon, control, seed, record_noise, replica);
  }
  const auto grid = time_grid(horizon, control.dt);
  const double t0 = grid[1];
  const auto x0 = entrance_sample(spec, t0, seed, replica);
  Trajectory rest = simulate(spec, x0, horizon - t0, control, seed, record_noise, replica);
  if (rest.grid.size() + 1 != grid.size())
    fail(ErrorCode::GridMismatch, "entrance grid does not align with the base grid");

  Trajectory tr;
  tr.n_particles = n;
  tr.grid = grid;
  tr.states.assign(n, 0.0);
  tr.states.insert(tr.states.end(), rest.states.begin(), rest.states.end());
  tr.has_noise = record_noise;
  if (record_noise) {
    tr.noise.assign(n, 0.0);
    tr.noise.insert(tr.noise.end(), rest.noise.begin(), rest.noise.end());
  }
  tr.seed = seed;
  tr.replica = replica;
  tr.substeps = rest.substeps;
  tr.saturations = rest.saturations;
  return tr;
}

ModelSpec time_scaled(const ModelSpec& spec, double a) {
  if (!(a > 0.0)) fail(ErrorCode::InvalidParams, "time offset a must be > 0");
  ModelSpec s = spec;
  switch (spec.kind) {
    case ModelKind::Wishart:
      s.scaling = TimeScaling{a, -1.0};
      break;
    case ModelKind::Dyson:
      s.scaling = TimeScaling{a, -0.5};
      break;
    default:
      fail(ErrorCode::InvalidParams, "time scaling is defined for Wishart and Dyson only");
  }
  return s;
}

}  // namespace eigenclt
