#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eigenclt {

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  double level = 0.01;
  bool pass = true;
  bool mandatory = true;
  // Free-form quantities echoed into the run report (estimate, target, se...).
  std::vector<std::pair<std::string, double>> values;
  std::string note;
};

// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

double normal_cdf(double x);

TestReport ks_normal(std::span<const double> samples, double mean, double sd,
                     double level = 0.01);
TestReport ks_two_sample(std::span<const double> a, std::span<const double> b,
                         double level = 0.01);

// Row-major replica x variable matrix.
struct CovarianceEstimate {
  int vars = 0;
  std::size_t replicas = 0;
  std::vector<double> mean;
  std::vector<double> cov;  // vars x vars
  std::vector<double> se;   // bootstrap standard errors, vars x vars
  double at(int i, int j) const { return cov[i * vars + j]; }
  double se_at(int i, int j) const { return se[i * vars + j]; }
};

CovarianceEstimate estimate_covariance(std::span<const double> samples, int vars,
                                       std::uint64_t seed, int resamples = 500);

// |estimate - target| <= nsigma * se, reported as a two-sided normal test with
// level 2(1 - Phi(nsigma)) so that pass <=> p_value > level.
TestReport z_check(const std::string& name, double estimate, double target, double se,
                   double nsigma = 3.0);

double mean_of(std::span<const double> x);
// Unbiased sample variance.
double variance_of(std::span<const double> x);

// Pairwise summation: result does not depend on how the input was produced.
double pairwise_sum(std::span<const double> x);

}  // namespace eigenclt
