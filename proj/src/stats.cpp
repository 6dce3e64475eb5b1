#include "eigenclt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "eigenclt/error.hpp"
#include "eigenclt/rng.hpp"

namespace eigenclt {

namespace {

constexpr std::size_t kMinKsSamples = 20;

}  // namespace

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

double mean_of(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::TooFewSamples, "mean of an empty sample");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  if (x.size() < 2) fail(ErrorCode::TooFewSamples, "variance needs >= 2 samples");
  const double m = mean_of(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return pairwise_sum(sq) / static_cast<double>(x.size() - 1);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // Theta-function form converges fast for small lambda.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = std::exp(-(2 * k - 1) * (2 * k - 1) * pi2 / (8.0 * lambda * lambda));
      s += term;
      if (term < 1e-300) break;
    }
    const double cdf = std::sqrt(2.0 * std::numbers::pi) / lambda * s;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double sign = (k % 2 == 1) ? 1.0 : -1.0;
    s += sign * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

TestReport ks_normal(std::span<const double> samples, double mean, double sd, double level) {
  if (samples.size() < kMinKsSamples)
    fail(ErrorCode::TooFewSamples, "ks_normal needs >= 20 samples, got " +
                                       std::to_string(samples.size()));
  if (!(sd > 0.0) || !std::isfinite(sd)) fail(ErrorCode::BadScale, "sd must be > 0");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf((x[i] - mean) / sd);
    d = std::max({d, f - i / n, (i + 1) / n - f});
  }
  TestReport r;
  r.name = "ks_normal";
  r.statistic = d;
  r.p_value = kolmogorov_survival(std::sqrt(n) * d);
  r.n1 = x.size();
  r.level = level;
  r.pass = r.p_value > level;
  return r;
}

TestReport ks_two_sample(std::span<const double> a, std::span<const double> b, double level) {
  if (a.size() < kMinKsSamples || b.size() < kMinKsSamples)
    fail(ErrorCode::TooFewSamples, "ks_two_sample needs >= 20 samples per side");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  TestReport r;
  r.name = "ks_two_sample";
  r.statistic = d;
  r.p_value = kolmogorov_survival(std::sqrt(n * m / (n + m)) * d);
  r.n1 = x.size();
  r.n2 = y.size();
  r.level = level;
  r.pass = r.p_value > level;
  return r;
}

CovarianceEstimate estimate_covariance(std::span<const double> samples, int vars,
                                       std::uint64_t seed, int resamples) {
  if (vars < 1 || samples.size() % vars != 0)
    fail(ErrorCode::InvalidParams, "sample matrix shape");
  const std::size_t m = samples.size() / vars;
  if (m < 2) fail(ErrorCode::TooFewSamples, "covariance needs >= 2 replicas");

  auto covariance_of = [&](const std::vector<std::size_t>& rows, std::vector<double>& mean,
                           std::vector<double>& cov) {
    mean.assign(vars, 0.0);
    cov.assign(static_cast<std::size_t>(vars) * vars, 0.0);
    std::vector<double> col(rows.size()), prod(rows.size());
    for (int a = 0; a < vars; ++a) {
      for (std::size_t r = 0; r < rows.size(); ++r) col[r] = samples[rows[r] * vars + a];
      mean[a] = mean_of(col);
    }
    for (int a = 0; a < vars; ++a)
      for (int b = 0; b <= a; ++b) {
        for (std::size_t r = 0; r < rows.size(); ++r)
          prod[r] = (samples[rows[r] * vars + a] - mean[a]) *
                    (samples[rows[r] * vars + b] - mean[b]);
        const double v = pairwise_sum(prod) / static_cast<double>(rows.size() - 1);
        cov[a * vars + b] = v;
        cov[b * vars + a] = v;
      }
  };

  CovarianceEstimate est;
  est.vars = vars;
  est.replicas = m;
  std::vector<std::size_t> rows(m);
  for (std::size_t r = 0; r < m; ++r) rows[r] = r;
  covariance_of(rows, est.mean, est.cov);

  const std::size_t cells = static_cast<std::size_t>(vars) * vars;
  std::vector<double> sum(cells, 0.0), sumsq(cells, 0.0);
  const CounterRng rng(seed, Domain::Bootstrap);
  std::vector<double> bmean, bcov;
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t r = 0; r < m; ++r) {
      const double u = rng.uniform_pair(static_cast<std::uint32_t>(b),
                                        static_cast<std::uint32_t>(r), 0, 0)[0];
      rows[r] = std::min(m - 1, static_cast<std::size_t>(u * static_cast<double>(m)));
    }
    covariance_of(rows, bmean, bcov);
    for (std::size_t c = 0; c < cells; ++c) {
      sum[c] += bcov[c];
      sumsq[c] += bcov[c] * bcov[c];
    }
  }
  est.se.assign(cells, 0.0);
  if (resamples > 1)
    for (std::size_t c = 0; c < cells; ++c) {
      const double mu = sum[c] / resamples;
      const double var = (sumsq[c] - resamples * mu * mu) / (resamples - 1);
      est.se[c] = std::sqrt(std::max(0.0, var));
    }
  return est;
}

TestReport z_check(const std::string& name, double estimate, double target, double se,
                   double nsigma) {
  TestReport r;
  r.name = name;
  const double diff = estimate - target;
  double z;
  if (se > 0.0)
    z = diff / se;
  else
    z = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
  r.statistic = z;
  r.p_value = std::isfinite(z) ? 2.0 * (1.0 - normal_cdf(std::abs(z))) : 0.0;
  r.level = 2.0 * (1.0 - normal_cdf(nsigma));
  r.pass = r.p_value > r.level;
  r.values = {{"estimate", estimate}, {"target", target}, {"se", se}, {"nsigma", nsigma}};
  return r;
}

}  // namespace eigenclt
