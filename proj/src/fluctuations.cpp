#include "eigenclt/fluctuations.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "eigenclt/csv_io.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/rng.hpp"

namespace eigenclt {

namespace {

constexpr double kFamilyTolerance = 1e-9;

void require_degree(const MomentCurve& curve, int n) {
  if (n < 0 || n > curve.K)
    fail(ErrorCode::DegreeMissing,
         "degree " + std::to_string(n) + " not covered by moment curve (K=" +
             std::to_string(curve.K) + ")");
}

// Cumulative trapezoid integral of f over the grid.
std::vector<double> cumtrapz(std::span<const double> grid, std::span<const double> f) {
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t k = 1; k < grid.size(); ++k)
    out[k] = out[k - 1] + 0.5 * (grid[k] - grid[k - 1]) * (f[k] + f[k - 1]);
  return out;
}

// Power sums sum_i x_i^j / N for j = 0..K at one stamp.
void power_means(std::span<const double> x, int K, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (double v : x) {
    double p = 1.0;
    for (int j = 0; j <= K; ++j) {
      out[j] += p;
      p *= v;
    }
  }
  const double inv = 1.0 / static_cast<double>(x.size());
  for (int j = 0; j <= K; ++j) out[j] *= inv;
  out[0] = 1.0;
}

}  // namespace

EmpiricalMoments empirical_moments(const Trajectory& traj, std::span<const int> degrees) {
  EmpiricalMoments em;
  em.degrees.assign(degrees.begin(), degrees.end());
  em.grid = traj.grid;
  int K = 0;
  for (int d : degrees) {
    if (d < 0 || d > kMaxDegree) fail(ErrorCode::DegreeOverflow, "degree " + std::to_string(d));
    K = std::max(K, d);
  }
  const std::size_t T = traj.grid.size();
  em.values.resize(degrees.size() * T);
  std::vector<double> pm(K + 1);
  for (std::size_t k = 0; k < T; ++k) {
    power_means(traj.state(k), K, pm);
    for (std::size_t d = 0; d < degrees.size(); ++d) em.values[d * T + k] = pm[degrees[d]];
  }
  return em;
}

FluctuationSample fluctuation(const Trajectory& traj, const MomentCurve& curve,
                              std::span<const int> degrees) {
  for (int d : degrees) require_degree(curve, d);
  const auto em = empirical_moments(traj, degrees);
  FluctuationSample fs;
  fs.degrees = em.degrees;
  fs.grid = em.grid;
  const std::size_t T = fs.grid.size();
  fs.L.resize(degrees.size() * T);
  const double N = traj.n_particles;
  for (std::size_t d = 0; d < degrees.size(); ++d)
    for (std::size_t k = 0; k < T; ++k)
      fs.L[d * T + k] =
          degrees[d] == 0 ? 0.0 : N * (em.at(d, k) - curve.value(degrees[d], fs.grid[k]));
  return fs;
}

std::vector<double> centered_process(const Trajectory& traj, const MomentCurve& curve,
                                     const LimitKernels& kern, int n) {
  const std::size_t T = traj.grid.size();
  if (n == 0) return std::vector<double>(T, 0.0);
  require_degree(curve, n);
  const double N = traj.n_particles;

  // L[j][k] and m[j][k] for j = 0..n.
  std::vector<std::vector<double>> L(n + 1, std::vector<double>(T)),
      m(n + 1, std::vector<double>(T));
  std::vector<double> pm(n + 1);
  for (std::size_t k = 0; k < T; ++k) {
    power_means(traj.state(k), n, pm);
    for (int j = 0; j <= n; ++j) {
      m[j][k] = curve.value(j, traj.grid[k]);
      L[j][k] = j == 0 ? 0.0 : N * (pm[j] - m[j][k]);
    }
  }

  const double b0 = kern.b.b0, b1 = kern.b.b1;
  const double c0 = kern.G.k0, c1 = kern.G.k1, c2 = kern.G.k2;
  const Quadratic rho = kern.bracket_density();
  // Diagonal density left after the pair term absorbs G(x,x).
  const double e[3] = {rho.a0 - c0, rho.a1 - 2.0 * c1, rho.a2 - c2};

  std::vector<double> integrand(T, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    double v = n * (b0 * L[n - 1][k] + b1 * L[n][k]);
    if (n >= 2) {
      double det = 0.0;
      for (int p = 0; p <= 2; ++p)
        if (e[p] != 0.0) det += e[p] * m[n - 2 + p][k];
      v += 0.5 * n * (n - 1) * det;
      double mixed = 0.0, twice = 0.0;
      for (int j = 0; j <= n - 2; ++j) {
        mixed += c0 * L[j][k] * m[n - 2 - j][k];
        mixed += c1 * (L[j + 1][k] * m[n - 2 - j][k] + L[j][k] * m[n - 1 - j][k]);
        mixed += c2 * L[j + 1][k] * m[n - 1 - j][k];
        twice += c0 * L[j][k] * L[n - 2 - j][k];
        twice += c1 * (L[j + 1][k] * L[n - 2 - j][k] + L[j][k] * L[n - 1 - j][k]);
        twice += c2 * L[j + 1][k] * L[n - 1 - j][k];
      }
      v += n * mixed + n / (2.0 * N) * twice;
    }
    integrand[k] = v;
  }
  const auto I = cumtrapz(traj.grid, integrand);
  std::vector<double> q(T);
  for (std::size_t k = 0; k < T; ++k) q[k] = L[n][k] - L[n][0] - I[k];
  return q;
}

std::vector<double> martingale_part(const Trajectory& traj, const ModelSpec& spec, int n) {
  if (!traj.has_noise) fail(ErrorCode::NoNoiseRecorded, "trajectory has no noise record");
  const std::size_t T = traj.grid.size();
  std::vector<double> out(T, 0.0);
  if (n == 0) return out;
  const bool clamp = spec.nonnegative;
  for (std::size_t k = 0; k + 1 < T; ++k) {
    const auto x = traj.state(k);
    const auto dw = traj.increment(k);
    double s = 0.0;
    for (int i = 0; i < traj.n_particles; ++i) {
      const double xi = clamp ? std::max(0.0, x[i]) : x[i];
      const double fp = n * std::pow(x[i], n - 1);
      s += fp * spec.diffusion_at(traj.grid[k], xi) * dw[i];
    }
    out[k + 1] = out[k] + s;
  }
  return out;
}

QuadraticVariation martingale_qv(const Trajectory& traj, const ModelSpec& spec, int n) {
  const auto nm = martingale_part(traj, spec, n);
  QuadraticVariation qv;
  const bool use_kernel = !spec.is_particle_system() && !spec.scaling;
  for (std::size_t k = 0; k + 1 < traj.grid.size(); ++k) {
    const double d = nm[k + 1] - nm[k];
    qv.realized += d * d;
    const double h = traj.grid[k + 1] - traj.grid[k];
    const auto x = traj.state(k);
    double s = 0.0;
    for (int i = 0; i < traj.n_particles; ++i) {
      const double fp = n * std::pow(x[i], n - 1);
      // <M_f>' = (2/N) <f'^2 G_N(x,x), L_N>, and N M has N^2 times that.
      const double xi = spec.nonnegative ? std::max(0.0, x[i]) : x[i];
      const double dens = use_kernel ? 2.0 * spec.interaction_kernel(xi, xi)
                                     : std::pow(spec.diffusion_at(traj.grid[k], xi), 2);
      s += fp * fp * dens;
    }
    qv.predicted += h * s;
  }
  return qv;
}

CovarianceKernel::CovarianceKernel(Quadratic density, const MomentCurve& curve,
                                   std::string label)
    : density_(density), grid_(curve.grid), K_(curve.K), label_(std::move(label)) {
  int top = 0;
  if (density.a1 != 0.0) top = 1;
  if (density.a2 != 0.0) top = 2;
  max_sum_ = K_ - top;
  const std::size_t T = grid_.size();
  moments_.assign(curve.values.begin(), curve.values.end());
  cumulative_.assign(T * (K_ + 1), 0.0);
  for (std::size_t k = 1; k < T; ++k) {
    const double h = grid_[k] - grid_[k - 1];
    for (int j = 0; j <= K_; ++j)
      cumulative_[k * (K_ + 1) + j] =
          cumulative_[(k - 1) * (K_ + 1) + j] +
          0.5 * h * (moments_[k * (K_ + 1) + j] + moments_[(k - 1) * (K_ + 1) + j]);
  }
}

double CovarianceKernel::integral(int j, double t) const {
  if (t <= grid_.front()) return 0.0;
  const std::size_t W = K_ + 1;
  if (t >= grid_.back()) return cumulative_[(grid_.size() - 1) * W + j];
  const auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
  if (*it == t) return cumulative_[hi * W + j];
  const std::size_t lo = hi - 1;
  const double w = (t - grid_[lo]) / (grid_[hi] - grid_[lo]);
  const double mlo = moments_[lo * W + j];
  const double mt = (1.0 - w) * mlo + w * moments_[hi * W + j];
  return cumulative_[lo * W + j] + 0.5 * (t - grid_[lo]) * (mlo + mt);
}

double CovarianceKernel::operator()(int m, double t, int n, double s) const {
  if (m == 0 || n == 0) return 0.0;
  if (m < 0 || n < 0 || m + n - 2 > max_sum_)
    fail(ErrorCode::DegreeMissing, "kernel needs moments beyond K=" + std::to_string(K_));
  const double u = std::min(t, s);
  const int base = m + n - 2;
  double v = 0.0;
  if (density_.a0 != 0.0) v += density_.a0 * integral(base, u);
  if (density_.a1 != 0.0) v += density_.a1 * integral(base + 1, u);
  if (density_.a2 != 0.0) v += density_.a2 * integral(base + 2, u);
  return m * n * v;
}

CovarianceKernel covariance_kernel(ModelKind kind, const MomentCurve& curve) {
  switch (kind) {
    case ModelKind::Wishart:
    case ModelKind::WishartDrifted:
      return CovarianceKernel({0.0, 4.0, 0.0}, curve, "4mn");
    case ModelKind::Dyson:
    case ModelKind::DysonDrifted:
      return CovarianceKernel({2.0, 0.0, 0.0}, curve, "2mn");
    case ModelKind::OrnsteinUhlenbeck:
    case ModelKind::OUDrifted:
      return CovarianceKernel({1.0, 0.0, 0.0}, curve, "mn");
    default:
      fail(ErrorCode::InvalidParams,
           "kernel for " + std::string(to_string(kind)) + " needs its limit kernels");
  }
}

CovarianceKernel covariance_kernel(const LimitKernels& kernels, const MomentCurve& curve) {
  return CovarianceKernel(kernels.bracket_density(), curve, "general");
}

std::vector<double> family_covariance(const CovarianceKernel& kernel,
                                      std::span<const int> degrees,
                                      std::span<const double> grid) {
  const std::size_t T = grid.size(), D = degrees.size(), W = D * T;
  std::vector<double> c(W * W);
  for (std::size_t a = 0; a < D; ++a)
    for (std::size_t k = 0; k < T; ++k)
      for (std::size_t b = 0; b < D; ++b)
        for (std::size_t l = 0; l < T; ++l)
          c[(a * T + k) * W + b * T + l] = kernel(degrees[a], grid[k], degrees[b], grid[l]);
  return c;
}

GaussianFamilySamples synthesize_gaussian_family(const CovarianceKernel& kernel,
                                                 std::span<const int> degrees,
                                                 std::span<const double> grid, std::size_t draws,
                                                 std::uint64_t seed) {
  const std::size_t W = degrees.size() * grid.size();
  const auto c = family_covariance(kernel, degrees, grid);
  Eigen::MatrixXd C(W, W);
  for (std::size_t i = 0; i < W; ++i)
    for (std::size_t j = 0; j < W; ++j) C(i, j) = c[i * W + j];
  // Pivoted LDL^T handles the singular (e.g. zero or rank-deficient) families
  // exactly; small negative pivots from rounding are clipped.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
  if (ldlt.info() != Eigen::Success)
    fail(ErrorCode::NotPSD, "family covariance factorization failed");
  const Eigen::VectorXd D = ldlt.vectorD();
  const double tol = kFamilyTolerance * std::max(1.0, C.diagonal().cwiseAbs().maxCoeff());
  if (W > 0 && D.minCoeff() < -tol)
    fail(ErrorCode::NotPSD, "family covariance is not positive semidefinite");
  const Eigen::VectorXd sqrtD = D.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd Lf = ldlt.matrixL();

  GaussianFamilySamples out;
  out.degrees.assign(degrees.begin(), degrees.end());
  out.grid.assign(grid.begin(), grid.end());
  out.draws = draws;
  out.values.resize(draws * W);
  const CounterRng rng(seed, Domain::GaussianFamily);
  Eigen::VectorXd z(W);
  std::vector<double> zbuf(W);
  for (std::size_t r = 0; r < draws; ++r) {
    rng.fill_normals(static_cast<std::uint32_t>(r), 0, 0, zbuf);
    for (std::size_t i = 0; i < W; ++i) z(i) = zbuf[i];
    const Eigen::VectorXd y = Lf.triangularView<Eigen::Lower>() * sqrtD.cwiseProduct(z);
    const Eigen::VectorXd g = ldlt.transpositionsP().transpose() * y;
    std::copy(g.data(), g.data() + W, out.values.begin() + r * W);
  }
  return out;
}

LimitPaths limit_fluctuation_recursion(ModelKind kind, double c, std::span<const double> l0,
                                       std::span<const double> gauss,
                                       std::span<const int> gauss_degrees,
                                       std::span<const double> grid, const MomentCurve& curve,
                                       int max_degree) {
  const std::size_t T = grid.size();
  if (max_degree < 0 || max_degree > kMaxDegree)
    fail(ErrorCode::DegreeOverflow, "max_degree " + std::to_string(max_degree));
  if (static_cast<int>(l0.size()) < max_degree + 1)
    fail(ErrorCode::MissingInput, "initial fluctuations up to degree " +
                                      std::to_string(max_degree) + " required");
  if (gauss.size() != gauss_degrees.size() * T)
    fail(ErrorCode::MissingInput, "Gaussian path does not match degrees x grid");
  std::vector<int> slot(max_degree + 1, -1);
  for (std::size_t d = 0; d < gauss_degrees.size(); ++d)
    if (gauss_degrees[d] >= 0 && gauss_degrees[d] <= max_degree) slot[gauss_degrees[d]] = int(d);
  for (int n = 1; n <= max_degree; ++n)
    if (slot[n] < 0)
      fail(ErrorCode::MissingInput, "Gaussian path for degree " + std::to_string(n) + " missing");
  if (max_degree >= 2) require_degree(curve, max_degree - 1);

  const bool wishart = kind == ModelKind::Wishart || kind == ModelKind::WishartDrifted;
  const bool dyson = kind == ModelKind::Dyson || kind == ModelKind::DysonDrifted;
  const bool ou = kind == ModelKind::OrnsteinUhlenbeck || kind == ModelKind::OUDrifted;
  if (!wishart && !dyson && !ou)
    fail(ErrorCode::InvalidParams,
         "no closed recursion for " + std::string(to_string(kind)));
  // Drift constant feeding c (n+2) int L(x^{n+1}).
  double cd = 0.0;
  if (wishart || kind == ModelKind::DysonDrifted || kind == ModelKind::OUDrifted) cd = c;

  std::vector<std::vector<double>> m(std::max(max_degree, 1), std::vector<double>(T));
  for (int j = 0; j < std::max(max_degree, 1) && j <= curve.K; ++j)
    for (std::size_t k = 0; k < T; ++k) m[j][k] = curve.value(j, grid[k]);
  auto G = [&](int n, std::size_t k) { return gauss[slot[n] * T + k]; };

  LimitPaths out;
  out.max_degree = max_degree;
  out.grid.assign(grid.begin(), grid.end());
  out.values.assign((max_degree + 1) * T, 0.0);
  auto L = [&](int n, std::size_t k) -> double& { return out.values[n * T + k]; };

  std::vector<double> integrand(T), y(T);
  for (int d = 1; d <= max_degree; ++d) {
    // d = n + 2 in the recursions; the degree-one case has no integral terms
    // except the drift coupling to L(x^0) = 0.
    for (std::size_t k = 0; k < T; ++k) {
      double v = cd * d * L(d - 1, k);
      if (d >= 2) {
        if (wishart) {
          v += d * (d - 1) * m[d - 1][k];
          for (int j = 0; j <= d - 2; ++j)
            v += d * (L(j + 1, k) * m[d - 2 - j][k] + L(j, k) * m[d - 1 - j][k]);
        } else {
          const double w = dyson ? 1.0 : 0.5;
          v += w * 0.5 * d * (d - 1) * m[d - 2][k];
          for (int j = 0; j <= d - 2; ++j) v += w * d * L(d - 2 - j, k) * m[j][k];
        }
      }
      integrand[k] = v;
    }
    const auto R = cumtrapz(grid, integrand);
    if (!ou) {
      for (std::size_t k = 0; k < T; ++k) L(d, k) = l0[d] + R[k] + G(d, k);
      continue;
    }
    // Variation of constants with rate a = d / 2.
    const double a = 0.5 * d;
    for (std::size_t k = 0; k < T; ++k) y[k] = std::exp(a * grid[k]) * (R[k] + G(d, k));
    const auto Iy = cumtrapz(grid, y);
    for (std::size_t k = 0; k < T; ++k) {
      const double decay = std::exp(-a * grid[k]);
      L(d, k) = decay * l0[d] + R[k] + G(d, k) - a * decay * Iy[k];
    }
  }
  return out;
}

RecursionLaw recursion_law(ModelKind kind, double c, std::span<const double> l0,
                          const CovarianceKernel& kernel, std::span<const double> grid,
                          const MomentCurve& curve, int max_degree, std::size_t stamp) {
  const std::size_t T = grid.size();
  if (stamp >= T) fail(ErrorCode::InvalidParams, "stamp outside the grid");
  std::vector<int> degrees(max_degree);
  for (int n = 1; n <= max_degree; ++n) degrees[n - 1] = n;
  const std::size_t W = degrees.size() * T;
  const auto cfam = family_covariance(kernel, degrees, grid);

  // The recursion is affine in the Gaussian path: L = A + B g.
  std::vector<double> g(W, 0.0);
  const auto base = limit_fluctuation_recursion(kind, c, l0, g, degrees, grid, curve, max_degree);
  const std::size_t D = degrees.size();
  std::vector<double> B(D * W);
  for (std::size_t i = 0; i < W; ++i) {
    g[i] = 1.0;
    const auto p = limit_fluctuation_recursion(kind, c, l0, g, degrees, grid, curve, max_degree);
    g[i] = 0.0;
    for (std::size_t d = 0; d < D; ++d)
      B[d * W + i] = p.at(degrees[d], stamp) - base.at(degrees[d], stamp);
  }
  RecursionLaw law;
  law.max_degree = max_degree;
  law.mean.resize(D);
  for (std::size_t d = 0; d < D; ++d) law.mean[d] = base.at(degrees[d], stamp);
  law.cov.assign(D * D, 0.0);
  std::vector<double> bc(W);
  for (std::size_t a = 0; a < D; ++a) {
    for (std::size_t j = 0; j < W; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < W; ++i) s += B[a * W + i] * cfam[i * W + j];
      bc[j] = s;
    }
    for (std::size_t b = 0; b < D; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < W; ++j) s += bc[j] * B[b * W + j];
      law.cov[a * D + b] = s;
    }
  }
  return law;
}

void write_fluctuation_csv(const std::vector<FluctuationSample>& samples,
                           std::span<const std::size_t> stamps, const std::string& path) {
  CsvWriter w(path);
  w.header({"replica", "degree", "t", "L", "Q", "M"});
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& fs = samples[r];
    const std::size_t T = fs.grid.size();
    for (std::size_t d = 0; d < fs.degrees.size(); ++d)
      for (std::size_t k : stamps) {
        if (k >= T) continue;
        w.begin_row();
        w.field(static_cast<long long>(r));
        w.field(fs.degrees[d]);
        w.field(fs.grid[k]);
        w.field(fs.L[d * T + k]);
        if (fs.Q.empty()) w.field(std::string()); else w.field(fs.Q[d * T + k]);
        if (fs.M.empty()) w.field(std::string()); else w.field(fs.M[d * T + k]);
        w.end_row();
      }
  }
}

}  // namespace eigenclt
