#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "eigenclt/stats.hpp"

namespace testing {

struct MeanVar {
  double mean = 0, var = 0, se_mean = 0, se_var = 0;
};

// Sample mean and unbiased variance with plain (normal-theory) standard errors;
// the variance SE uses the sample fourth central moment.
inline MeanVar summarize(std::span<const double> x) {
  MeanVar r;
  const double n = static_cast<double>(x.size());
  r.mean = eigenclt::mean_of(x);
  double m2 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - r.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  r.var = m2 / (n - 1);
  m2 /= n;
  m4 /= n;
  r.se_mean = std::sqrt(r.var / n);
  r.se_var = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
  return r;
}

inline bool within(double est, double target, double se, double k = 3.0) {
  return std::abs(est - target) <= k * se;
}

}  // namespace testing
