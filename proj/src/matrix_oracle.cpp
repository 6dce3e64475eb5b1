#include "eigenclt/matrix_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "eigenclt/error.hpp"
#include "eigenclt/rng.hpp"

namespace eigenclt {

double SymmetricMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < n_; ++i) t += (*this)(i, i);
  return t;
}

double SymmetricMatrix::frobenius_norm() const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j <= i; ++j) {
      const double v = (*this)(i, j);
      s += (i == j ? 1.0 : 2.0) * v * v;
    }
  return std::sqrt(s);
}

SymmetricMatrix SymmetricMatrix::diagonal(std::span<const double> d) {
  SymmetricMatrix m(static_cast<int>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) m.at(int(i), int(i)) = d[i];
  return m;
}

std::vector<double> jacobi_eigenvalues(const SymmetricMatrix& m, int max_sweeps) {
  const int n = m.size();
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double v = m(i, j);
      if (!std::isfinite(v)) fail(ErrorCode::InvalidParams, "non-finite matrix entry");
      a[i * n + j] = v;
    }
  auto A = [&](int i, int j) -> double& { return a[static_cast<std::size_t>(i) * n + j]; };

  const double norm = m.frobenius_norm();
  const double tol = 1e-12 * norm;
  auto off_norm = [&] {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2.0 * A(i, j) * A(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  while (n > 1 && off_norm() > tol) {
    if (sweep++ == max_sweeps)
      fail(ErrorCode::NoConvergence, "Jacobi did not converge in " +
                                         std::to_string(max_sweeps) + " sweeps");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        A(p, q) = 0.0;
        A(q, p) = 0.0;
      }
    }
  }

  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = A(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

MatrixKind parse_matrix_kind(std::string_view name) {
  if (name == "SymmetricBM" || name == "Dyson") return MatrixKind::SymmetricBM;
  if (name == "Wishart") return MatrixKind::Wishart;
  if (name == "OU" || name == "OrnsteinUhlenbeck") return MatrixKind::OU;
  fail(ErrorCode::UnknownKind, "matrix kind '" + std::string(name) + "'");
}

namespace {

SymmetricMatrix gram_over_n(const std::vector<double>& b, int p, int n) {
  SymmetricMatrix x(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int r = 0; r < p; ++r) s += b[r * n + i] * b[r * n + j];
      x.at(i, j) = s / n;
    }
  return x;
}

}  // namespace

Trajectory simulate_matrix(MatrixKind kind, int n, int p, double horizon, double dt,
                           std::uint64_t seed, std::span<const double> init,
                           std::uint32_t replica) {
  if (n < 1) fail(ErrorCode::InvalidParams, "N must be >= 1");
  if (n > kMatrixOracleMaxN) fail(ErrorCode::TooLarge, "N exceeds 512");
  if (kind == MatrixKind::Wishart && !(p > n - 1))
    fail(ErrorCode::InvalidParams, "Wishart requires P > N-1");
  if (!init.empty() && static_cast<int>(init.size()) != n)
    fail(ErrorCode::InvalidInit, "init length must equal N");
  std::vector<double> lambda0(init.begin(), init.end());
  if (lambda0.empty()) lambda0.assign(n, 0.0);
  if (kind == MatrixKind::Wishart)
    for (double v : lambda0)
      if (v < 0) fail(ErrorCode::InvalidInit, "Wishart init must be nonnegative");

  Trajectory tr;
  tr.n_particles = n;
  tr.grid = horizon == 0.0 ? std::vector<double>{0.0} : time_grid(horizon, dt);
  tr.states.resize(tr.grid.size() * n);
  tr.seed = seed;
  tr.replica = replica;

  const CounterRng rng(seed, Domain::MatrixOracle);
  const double inv_sqrt_n = 1.0 / std::sqrt(double(n));

  if (kind == MatrixKind::Wishart) {
    // B is P x N with B(0)^T B(0) / N = diag(lambda0).
    std::vector<double> b(static_cast<std::size_t>(p) * n, 0.0);
    for (int i = 0; i < n; ++i) b[i * n + i] = std::sqrt(n * lambda0[i]);
    auto ev0 = jacobi_eigenvalues(gram_over_n(b, p, n));
    std::copy(ev0.begin(), ev0.end(), tr.states.begin());
    for (std::size_t k = 0; k + 1 < tr.grid.size(); ++k) {
      const double sh = std::sqrt(tr.grid[k + 1] - tr.grid[k]);
      NormalStream z(rng, replica, static_cast<std::uint32_t>(k));
      for (auto& v : b) v += sh * z.next();
      auto ev = jacobi_eigenvalues(gram_over_n(b, p, n));
      std::copy(ev.begin(), ev.end(), tr.states.begin() + (k + 1) * n);
    }
    return tr;
  }

  SymmetricMatrix x = SymmetricMatrix::diagonal(lambda0);
  std::copy(lambda0.begin(), lambda0.end(), tr.states.begin());
  std::sort(tr.states.begin(), tr.states.begin() + n);
  for (std::size_t k = 0; k + 1 < tr.grid.size(); ++k) {
    const double h = tr.grid[k + 1] - tr.grid[k];
    NormalStream z(rng, replica, static_cast<std::uint32_t>(k));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) {
        if (kind == MatrixKind::SymmetricBM) {
          // Diagonal variance 2h/N, off-diagonal h/N.
          const double sd = (i == j ? std::sqrt(2.0) : 1.0) * inv_sqrt_n * std::sqrt(h);
          x.at(i, j) += sd * z.next();
        } else {
          const double sigma = (i == j ? 2.0 : std::sqrt(2.0)) / (2.0 * std::sqrt(double(n)));
          const double decay = std::exp(-0.5 * h);
          x.at(i, j) = decay * x(i, j) + sigma * std::sqrt(-std::expm1(-h)) * z.next();
        }
      }
    auto ev = jacobi_eigenvalues(x);
    std::copy(ev.begin(), ev.end(), tr.states.begin() + (k + 1) * n);
  }
  return tr;
}

}  // namespace eigenclt
