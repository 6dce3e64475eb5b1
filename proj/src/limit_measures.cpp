#include "eigenclt/limit_measures.hpp"

#include <algorithm>
#include <cmath>

#include "eigenclt/csv_io.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/sde_engine.hpp"

namespace eigenclt {

double MomentCurve::value(int k, double t) const {
  if (k < 0 || k > K) fail(ErrorCode::DegreeMissing, "degree " + std::to_string(k));
  if (t <= grid.front()) return at(k, 0);
  if (t >= grid.back()) return at(k, grid.size() - 1);
  const auto it = std::lower_bound(grid.begin(), grid.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  if (*it == t) return at(k, hi);
  const std::size_t lo = hi - 1;
  const double w = (t - grid[lo]) / (grid[hi] - grid[lo]);
  return (1.0 - w) * at(k, lo) + w * at(k, hi);
}

void moment_derivative(const LimitKernels& kern, std::span<const double> m,
                       std::span<double> dm) {
  const int K = static_cast<int>(m.size()) - 1;
  const double b0 = kern.b.b0, b1 = kern.b.b1;
  const double c0 = kern.G.k0, c1 = kern.G.k1, c2 = kern.G.k2;
  dm[0] = 0.0;
  for (int k = 1; k <= K; ++k) {
    double drift = b0 * m[k - 1] + b1 * m[k];
    double pair = 0.0;
    for (int j = 0; j <= k - 2; ++j) {
      pair += c0 * m[j] * m[k - 2 - j];
      pair += c1 * (m[j + 1] * m[k - 2 - j] + m[j] * m[k - 1 - j]);
      pair += c2 * m[j + 1] * m[k - 1 - j];
    }
    dm[k] = k * drift + 0.5 * k * pair;
  }
}

MomentCurve evolve_moments(const LimitKernels& kernels, std::span<const double> init,
                           double horizon, double dt, int K) {
  if (K < 0 || K > kMaxDegree)
    fail(ErrorCode::DegreeOverflow, "K must be in [0, 12], got " + std::to_string(K));
  if (static_cast<int>(init.size()) < K + 1)
    fail(ErrorCode::DegreeOverflow, "initial moments up to degree " + std::to_string(K) +
                                        " required, got " + std::to_string(init.size()));
  MomentCurve c;
  c.K = K;
  c.grid = time_grid(horizon, dt);
  c.values.resize(c.grid.size() * (K + 1));
  std::vector<double> m(init.begin(), init.begin() + K + 1);
  m[0] = 1.0;
  std::copy(m.begin(), m.end(), c.values.begin());

  const std::size_t n = K + 1;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t s = 0; s + 1 < c.grid.size(); ++s) {
    const double h = c.grid[s + 1] - c.grid[s];
    moment_derivative(kernels, m, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = m[i] + 0.5 * h * k1[i];
    moment_derivative(kernels, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = m[i] + 0.5 * h * k2[i];
    moment_derivative(kernels, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = m[i] + h * k3[i];
    moment_derivative(kernels, tmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      m[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    std::copy(m.begin(), m.end(), c.values.begin() + (s + 1) * n);
  }
  return c;
}

std::vector<double> semicircle_moments(int K, double t) {
  if (t < 0) fail(ErrorCode::InvalidParams, "variance scale must be >= 0");
  std::vector<double> m(K + 1, 0.0);
  std::vector<double> catalan{1.0};
  for (int j = 0; 2 * j <= K; ++j) {
    if (j > 0) {
      double cj = 0.0;
      for (int i = 0; i < j; ++i) cj += catalan[i] * catalan[j - 1 - i];
      catalan.push_back(cj);
    }
    m[2 * j] = catalan[j] * std::pow(t, j);
  }
  return m;
}

std::vector<double> mp_moments(int K, double c, double t) {
  if (c < 1.0) fail(ErrorCode::InvalidParams, "Marchenko-Pastur ratio must be >= 1");
  if (t < 0) fail(ErrorCode::InvalidParams, "scale must be >= 0");
  std::vector<double> m(K + 1, 0.0);
  m[0] = 1.0;
  auto binom = [](int n, int r) {
    double b = 1.0;
    for (int i = 1; i <= r; ++i) b = b * (n - r + i) / i;
    return b;
  };
  for (int k = 1; k <= K; ++k) {
    double s = 0.0;
    for (int r = 0; r <= k - 1; ++r)
      s += binom(k, r) * binom(k - 1, r) * std::pow(c, r + 1) / (r + 1);
    m[k] = std::pow(t, k) * s;
  }
  return m;
}

std::vector<double> point_moments(std::span<const double> x, int K) {
  std::vector<double> m(K + 1, 0.0);
  for (double v : x) {
    double p = 1.0;
    for (int k = 0; k <= K; ++k) {
      m[k] += p;
      p *= v;
    }
  }
  for (auto& v : m) v /= static_cast<double>(x.size());
  return m;
}

void write_moment_csv(const MomentCurve& curve, const std::string& path) {
  CsvWriter w(path);
  std::vector<std::string> header{"t"};
  for (int k = 0; k <= curve.K; ++k) header.push_back("m" + std::to_string(k));
  w.header(header);
  for (std::size_t s = 0; s < curve.grid.size(); ++s) {
    w.begin_row();
    w.field(curve.grid[s]);
    for (double v : curve.row(s)) w.field(v);
    w.end_row();
  }
}

}  // namespace eigenclt
