#include <cmath>
#include <vector>

#include "doctest.h"
#include "eigenclt/error.hpp"
#include "eigenclt/rng.hpp"
#include "eigenclt/stats.hpp"

using namespace eigenclt;

namespace {

std::vector<double> normals(std::uint64_t seed, std::size_t n) {
  const CounterRng rng(seed, Domain::Scratch);
  NormalStream z(rng, 0, 0);
  std::vector<double> x(n);
  for (auto& v : x) v = z.next();
  return x;
}

}  // namespace

TEST_CASE("Kolmogorov survival function") {
  CHECK(kolmogorov_survival(0.0) == 1.0);
  // Classical critical values.
  CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  // The two series agree across the switch point.
  CHECK(kolmogorov_survival(1.1799) == doctest::Approx(kolmogorov_survival(1.1801)).epsilon(1e-3));
}

TEST_CASE("one-sample KS against a normal") {
  SUBCASE("point mass at the mean") {
    const std::vector<double> x(100, 0.0);
    const auto r = ks_normal(x, 0.0, 1.0);
    CHECK(r.statistic == doctest::Approx(0.5));
    CHECK_FALSE(r.pass);
  }
  SUBCASE("in-repo normal sampler") {
    const auto r = ks_normal(normals(1, 10000), 0.0, 1.0);
    CHECK(r.p_value > 0.01);
    CHECK(r.pass);
  }
  SUBCASE("shifted sample is rejected") {
    auto x = normals(2, 2000);
    for (auto& v : x) v += 0.3;
    CHECK_FALSE(ks_normal(x, 0.0, 1.0).pass);
  }
  SUBCASE("errors") {
    const std::vector<double> three{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(ks_normal(three, 0.0, 1.0), Error);
    try {
      ks_normal(three, 0.0, 1.0);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewSamples);
    }
    CHECK_THROWS_AS(ks_normal(normals(3, 50), 0.0, 0.0), Error);
  }
}

TEST_CASE("two-sample KS") {
  const auto a = normals(4, 5000);
  const auto same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  std::vector<double> neg(30), pos(40);
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -1.0 - i;
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = 1.5 + i;
  CHECK(ks_two_sample(neg, pos).statistic == 1.0);

  const auto b = normals(5, 5000);
  CHECK(ks_two_sample(a, b).p_value > 0.01);
}

TEST_CASE("covariance estimate") {
  SUBCASE("identical columns") {
    const auto x = normals(6, 500);
    std::vector<double> m;
    for (double v : x) {
      m.push_back(v);
      m.push_back(v);
    }
    const auto est = estimate_covariance(m, 2, 1, 100);
    CHECK(est.at(0, 1) == doctest::Approx(est.at(0, 0)));
    CHECK(est.at(0, 0) == doctest::Approx(variance_of(x)));
  }
  SUBCASE("constant column") {
    const auto x = normals(7, 300);
    std::vector<double> m;
    for (double v : x) {
      m.push_back(v);
      m.push_back(4.0);
    }
    const auto est = estimate_covariance(m, 2, 1, 100);
    CHECK(est.at(1, 1) == 0.0);
    CHECK(est.se_at(1, 1) == 0.0);
    CHECK(est.at(0, 1) == 0.0);
  }
  SUBCASE("correlated pair from a known factor") {
    // (u, v) = A z with A = [[1, 0], [0.8, 0.6]]: Cov = A A^T.
    const auto z1 = normals(8, 10000), z2 = normals(9, 10000);
    std::vector<double> m;
    for (std::size_t i = 0; i < z1.size(); ++i) {
      m.push_back(z1[i]);
      m.push_back(0.8 * z1[i] + 0.6 * z2[i]);
    }
    const auto est = estimate_covariance(m, 2, 3);
    CHECK(std::abs(est.at(0, 0) - 1.0) <= 3 * est.se_at(0, 0));
    CHECK(std::abs(est.at(0, 1) - 0.8) <= 3 * est.se_at(0, 1));
    CHECK(std::abs(est.at(1, 1) - 1.0) <= 3 * est.se_at(1, 1));
    // Bootstrap SE of a variance is close to sqrt(2/n) for normal data.
    CHECK(est.se_at(0, 0) == doctest::Approx(std::sqrt(2.0 / 10000)).epsilon(0.2));
  }
  SUBCASE("same seed, same standard errors") {
    const auto x = normals(10, 200);
    CHECK(estimate_covariance(x, 1, 5, 50).se == estimate_covariance(x, 1, 5, 50).se);
  }
  SUBCASE("shape errors") {
    const std::vector<double> x{1, 2, 3};
    CHECK_THROWS_AS(estimate_covariance(x, 2, 1), Error);
    CHECK_THROWS_AS(estimate_covariance(std::vector<double>{1.0, 2.0}, 2, 1), Error);
  }
}

TEST_CASE("z check") {
  const auto ok = z_check("a", 1.05, 1.0, 0.1);
  CHECK(ok.pass);
  CHECK(ok.statistic == doctest::Approx(0.5));
  CHECK_FALSE(z_check("b", 1.5, 1.0, 0.1).pass);
  CHECK(z_check("c", 1.0, 1.0, 0.0).pass);
  CHECK_FALSE(z_check("d", 1.1, 1.0, 0.0).pass);
  // pass <=> |z| <= nsigma
  CHECK(z_check("e", 1.299, 1.0, 0.1).pass);
  CHECK_FALSE(z_check("f", 1.301, 1.0, 0.1).pass);
}

TEST_CASE("summaries") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(mean_of(x) == 2.5);
  CHECK(variance_of(x) == doctest::Approx(5.0 / 3.0));
  CHECK_THROWS_AS(mean_of(std::vector<double>{}), Error);
  CHECK_THROWS_AS(variance_of(std::vector<double>{1.0}), Error);
  // Pairwise summation is insensitive to the order of blocks.
  std::vector<double> big(1000, 0.1);
  CHECK(pairwise_sum(big) == doctest::Approx(100.0).epsilon(1e-14));
}
