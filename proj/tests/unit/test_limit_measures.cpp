#include <cmath>
#include <vector>

#include "doctest.h"
#include "eigenclt/error.hpp"
#include "eigenclt/limit_measures.hpp"

using namespace eigenclt;

namespace {

std::vector<double> delta0(int K) {
  std::vector<double> m(K + 1, 0.0);
  m[0] = 1.0;
  return m;
}

// Moments of MP(c) by direct numerical integration of its density, as an
// oracle independent of the Narayana sum.
double mp_moment_quadrature(int k, double c) {
  const double a = std::pow(std::sqrt(c) - 1, 2), b = std::pow(std::sqrt(c) + 1, 2);
  // Substitution x = (a+b)/2 + (b-a)/2 cos(theta) removes the edge singularities.
  const int n = 20000;
  double s = 0;
  for (int i = 0; i < n; ++i) {
    const double th = M_PI * (i + 0.5) / n;
    const double x = 0.5 * (a + b) + 0.5 * (b - a) * std::cos(th);
    const double dens = std::sqrt((b - x) * (x - a)) / (2 * M_PI * x);
    s += std::pow(x, k) * dens * 0.5 * (b - a) * std::sin(th) * (M_PI / n);
  }
  return s;
}

}  // namespace

TEST_CASE("semicircle moments") {
  CHECK(semicircle_moments(6, 1.0) == std::vector<double>{1, 0, 1, 0, 2, 0, 5});
  CHECK(semicircle_moments(2, 0.0) == std::vector<double>{1, 0, 0});
  const auto a = semicircle_moments(4, 1.0), b = semicircle_moments(4, 2.7);
  CHECK(b[4] == doctest::Approx(2.7 * 2.7 * a[4]));
}

TEST_CASE("Marchenko-Pastur moments") {
  const auto m = mp_moments(2, 1.0, 1.0);
  CHECK(m[0] == doctest::Approx(1));
  CHECK(m[1] == doctest::Approx(1));
  CHECK(m[2] == doctest::Approx(2));
  CHECK(mp_moments(3, 2.0, 1.0)[3] == doctest::Approx(22));
  const auto at0 = mp_moments(4, 3.0, 0.0);
  for (std::size_t k = 1; k < at0.size(); ++k) CHECK(at0[k] == 0.0);
  for (int k = 1; k <= 5; ++k)
    CHECK(mp_moments(5, 2.5, 1.0)[k] == doctest::Approx(mp_moment_quadrature(k, 2.5)).epsilon(1e-6));
  CHECK_THROWS_AS(mp_moments(2, 0.5, 1.0), Error);
}

TEST_CASE("point moments") {
  CHECK(point_moments(std::vector<double>{2.0}, 3)[3] == doctest::Approx(8));
  CHECK(point_moments(std::vector<double>{1.0, 3.0}, 2)[2] == doctest::Approx(5));
  CHECK(point_moments(std::vector<double>{-4.0, 7.0}, 2)[0] == 1.0);
}

TEST_CASE("Dyson hierarchy from zero") {
  const auto k = limit_kernels(build_model(ModelKind::Dyson, 10, {}));
  const auto c = evolve_moments(k, delta0(4), 1.0, 1e-3, 4);
  const std::size_t last = c.grid.size() - 1;
  CHECK(std::abs(c.at(2, last) - 1.0) < 1e-8);
  CHECK(std::abs(c.at(4, last) - 2.0) < 1e-8);
  CHECK(c.provenance == Provenance::HierarchyODE);
}

TEST_CASE("Wishart hierarchy from zero") {
  const auto k = limit_kernels(build_model(ModelKind::Wishart, 10, {{"c", 2}}));
  const auto c = evolve_moments(k, delta0(3), 1.0, 1e-3, 3);
  for (std::size_t s = 0; s < c.grid.size(); s += 100) {
    const double t = c.grid[s];
    CHECK(std::abs(c.at(1, s) - 2 * t) < 1e-8);
    CHECK(std::abs(c.at(2, s) - 6 * t * t) < 1e-8);
  }
}

TEST_CASE("hierarchy matches closed forms up to K = 8") {
  const double t = 0.8;
  SUBCASE("Dyson from zero") {
    const auto k = limit_kernels(build_model(ModelKind::Dyson, 10, {}));
    const auto c = evolve_moments(k, delta0(8), t, 1e-3, 8);
    const auto want = semicircle_moments(8, t);
    for (int j = 0; j <= 8; ++j) CHECK(std::abs(c.at(j, c.grid.size() - 1) - want[j]) < 1e-6);
  }
  SUBCASE("Dyson from the semicircle") {
    const auto k = limit_kernels(build_model(ModelKind::Dyson, 10, {}));
    const auto c = evolve_moments(k, semicircle_moments(8, 1.0), t, 1e-3, 8);
    const auto want = semicircle_moments(8, 1.0 + t);
    for (int j = 0; j <= 8; ++j) CHECK(std::abs(c.at(j, c.grid.size() - 1) - want[j]) < 1e-6);
  }
  SUBCASE("Wishart from zero") {
    const auto k = limit_kernels(build_model(ModelKind::Wishart, 10, {{"c", 1.5}}));
    const auto c = evolve_moments(k, delta0(8), t, 1e-3, 8);
    const auto want = mp_moments(8, 1.5, t);
    for (int j = 0; j <= 8; ++j)
      CHECK(std::abs(c.at(j, c.grid.size() - 1) - want[j]) < 1e-6 * std::max(1.0, want[j]));
  }
  SUBCASE("OU invariant law is a fixed point") {
    // Semicircle of variance 1/2 is stationary for the OU limit.
    const auto k = limit_kernels(build_model(ModelKind::OrnsteinUhlenbeck, 10, {}));
    const auto init = semicircle_moments(8, 0.5);
    const auto c = evolve_moments(k, init, 2.0, 1e-3, 8);
    for (int j = 0; j <= 8; ++j) CHECK(std::abs(c.at(j, c.grid.size() - 1) - init[j]) < 1e-8);
  }
}

TEST_CASE("mass is conserved for every model") {
  for (auto kind : {ModelKind::Wishart, ModelKind::Dyson, ModelKind::OrnsteinUhlenbeck,
                    ModelKind::GeneralizedWishart, ModelKind::ParticleSystem}) {
    const auto k = limit_kernels(build_model(kind, 10, {{"c", 2}}));
    const auto c = evolve_moments(k, point_moments(std::vector<double>{0.5, 1.0, 2.0}, 5), 1.0,
                                  1e-2, 5);
    for (std::size_t s = 0; s < c.grid.size(); ++s) CHECK(c.at(0, s) == 1.0);
  }
}

TEST_CASE("curve interpolation is exact at stamps") {
  const auto k = limit_kernels(build_model(ModelKind::Dyson, 10, {}));
  const auto c = evolve_moments(k, delta0(2), 1.0, 0.1, 2);
  CHECK(c.value(2, c.grid[3]) == c.at(2, 3));
  CHECK(c.value(2, 0.35) == doctest::Approx(0.35));
}

TEST_CASE("hierarchy input validation") {
  const auto k = limit_kernels(build_model(ModelKind::Dyson, 10, {}));
  CHECK_THROWS_AS(evolve_moments(k, delta0(13), 1.0, 0.1, 13), Error);
  CHECK_THROWS_AS(evolve_moments(k, delta0(2), 1.0, 0.1, 4), Error);
}
