#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "eigenclt/ensembles.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/matrix_oracle.hpp"
#include "support.hpp"

using namespace eigenclt;

namespace {

double moment(const std::vector<double>& x, int k) {
  double s = 0;
  for (double v : x) s += std::pow(v, k);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("Laguerre N=1 P=1 is chi-square with one degree") {
  std::vector<double> x;
  for (std::uint32_t r = 0; r < 4000; ++r) x.push_back(sample_scaled_laguerre(1, 1, 5, r).positions[0]);
  const auto m = testing::summarize(x);
  CHECK(testing::within(m.mean, 1.0, m.se_mean));
  CHECK(testing::within(m.var, 2.0, m.se_var));
}

TEST_CASE("Laguerre first moment is P/N and the spectrum is nonnegative") {
  std::vector<double> m1;
  for (std::uint32_t r = 0; r < 4000; ++r) {
    const auto s = sample_scaled_laguerre(4, 8, 6, r);
    CHECK(s.kind == "ScaledLaguerre");
    for (double v : s.positions) CHECK(v >= 0.0);
    CHECK(std::is_sorted(s.positions.begin(), s.positions.end()));
    m1.push_back(moment(s.positions, 1));
  }
  const auto m = testing::summarize(m1);
  CHECK(testing::within(m.mean, 2.0, m.se_mean));
  CHECK_THROWS_AS(sample_scaled_laguerre(4, 3, 1), Error);
}

TEST_CASE("GOE N=1 is normal with variance 2") {
  std::vector<double> x;
  for (std::uint32_t r = 0; r < 4000; ++r) x.push_back(sample_scaled_goe(1, 7, r).positions[0]);
  const auto m = testing::summarize(x);
  CHECK(testing::within(m.mean, 0.0, m.se_mean));
  CHECK(testing::within(m.var, 2.0, m.se_var));
}

TEST_CASE("GOE second moment is (N+1)/N") {
  std::vector<double> m2;
  for (std::uint32_t r = 0; r < 4000; ++r) m2.push_back(moment(sample_scaled_goe(16, 8, r).positions, 2));
  const auto m = testing::summarize(m2);
  CHECK(testing::within(m.mean, 17.0 / 16.0, m.se_mean));
}

TEST_CASE("GOE spectrum is symmetric in law") {
  std::vector<double> top, flipped;
  for (std::uint32_t r = 0; r < 3000; ++r) {
    const auto s = sample_scaled_goe(6, 9, r).positions;
    top.push_back(s.back());
    const auto t = sample_scaled_goe(6, 10, r).positions;
    flipped.push_back(-t.front());
  }
  CHECK(ks_two_sample(top, flipped).pass);
}

TEST_CASE("tridiagonal initial draws match the dense samplers") {
  const auto dyson = build_model(ModelKind::Dyson, 8, {});
  const auto wishart = build_model(ModelKind::Wishart, 8, {{"P", 12}});
  std::vector<double> a, b, c, d;
  for (std::uint32_t r = 0; r < 3000; ++r) {
    a.push_back(make_initial(InitialKind::Ensemble, dyson, {}, 11, r).back());
    b.push_back(sample_scaled_goe(8, 12, r).positions.back());
    c.push_back(make_initial(InitialKind::Ensemble, wishart, {}, 13, r).front());
    d.push_back(sample_scaled_laguerre(8, 12, 14, r).positions.front());
  }
  CHECK(ks_two_sample(a, b).pass);
  CHECK(ks_two_sample(c, d).pass);
}

TEST_CASE("make_initial") {
  const auto dyson = build_model(ModelKind::Dyson, 5, {});
  CHECK(make_initial(InitialKind::Zero, dyson, {}, 1) == std::vector<double>(5, 0.0));

  SUBCASE("explicit values are sorted and length-checked") {
    InitialParams p;
    p.values = {3, -1, 0, 2, 1};
    CHECK(make_initial(InitialKind::Explicit, dyson, p, 1) == std::vector<double>{-1, 0, 1, 2, 3});
    p.values = {1, 2};
    CHECK_THROWS_AS(make_initial(InitialKind::Explicit, dyson, p, 1), Error);
  }
  SUBCASE("degenerate band reproduces the ensemble draw") {
    const auto s = build_model(ModelKind::Dyson, 3, {});
    InitialParams p;
    p.a = 1;
    p.b = 0;
    CHECK(make_initial(InitialKind::DominatedEnsemble, s, p, 4, 2) ==
          make_initial(InitialKind::Ensemble, s, {}, 4, 2));
  }
  SUBCASE("band around the scaled draw") {
    const auto s = build_model(ModelKind::Dyson, 10, {});
    InitialParams p;
    p.a = 4;
    p.b = 1;
    for (std::uint32_t r = 0; r < 20; ++r) {
      const auto xi = make_initial(InitialKind::Ensemble, s, {}, 5, r);
      const auto x = make_initial(InitialKind::DominatedEnsemble, s, p, 5, r);
      for (int i = 0; i < 10; ++i) {
        CHECK(x[i] >= 2 * xi[i] - 1 - 1e-12);
        CHECK(x[i] <= 2 * xi[i] + 1 + 1e-12);
      }
    }
  }
  SUBCASE("Wishart ensemble needs an integer P") {
    const auto w = build_model(ModelKind::Wishart, 4, {{"c", 1.1}});
    CHECK_THROWS_AS(make_initial(InitialKind::Ensemble, w, {}, 1), Error);
  }
}

TEST_CASE("initial kind names") {
  for (auto k : {InitialKind::Zero, InitialKind::Ensemble, InitialKind::DominatedEnsemble,
                 InitialKind::Explicit})
    CHECK(parse_initial_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_initial_kind("Uniform"), Error);
}

TEST_CASE("entrance laws match the matrix processes") {
  SUBCASE("Dyson") {
    const auto s = build_model(ModelKind::Dyson, 5, {});
    std::vector<double> a, b;
    for (std::uint32_t r = 0; r < 3000; ++r) {
      a.push_back(entrance_sample(s, 0.3, 1, r).back());
      const auto tr = simulate_matrix(MatrixKind::SymmetricBM, 5, 0, 0.3, 0.3, 2, {}, r);
      b.push_back(tr.state(1)[4]);
    }
    CHECK(ks_two_sample(a, b).pass);
  }
  SUBCASE("OU") {
    const auto s = build_model(ModelKind::OrnsteinUhlenbeck, 5, {});
    std::vector<double> a, b;
    for (std::uint32_t r = 0; r < 3000; ++r) {
      a.push_back(entrance_sample(s, 0.7, 3, r).back());
      const auto tr = simulate_matrix(MatrixKind::OU, 5, 0, 0.7, 0.7, 4, {}, r);
      b.push_back(tr.state(1)[4]);
    }
    CHECK(ks_two_sample(a, b).pass);
  }
  SUBCASE("Wishart") {
    const auto s = build_model(ModelKind::Wishart, 4, {{"P", 6}});
    std::vector<double> a, b;
    for (std::uint32_t r = 0; r < 3000; ++r) {
      a.push_back(entrance_sample(s, 0.5, 5, r).back());
      const auto tr = simulate_matrix(MatrixKind::Wishart, 4, 6, 0.5, 0.5, 6, {}, r);
      b.push_back(tr.state(1)[3]);
    }
    CHECK(ks_two_sample(a, b).pass);
  }
  CHECK_THROWS_AS(entrance_sample(build_model(ModelKind::ParticleSystem, 3, {}), 0.1, 1), Error);
}

TEST_CASE("simulate_from_zero starts at the origin and keeps the grid") {
  const auto s = build_model(ModelKind::Dyson, 6, {});
  StepControl c;
  c.dt = 0.01;
  const auto tr = simulate_from_zero(s, 0.5, c, 3, true);
  CHECK(tr.grid == time_grid(0.5, 0.01));
  for (double v : tr.state(0)) CHECK(v == 0.0);
  for (double v : tr.increment(0)) CHECK(v == 0.0);
  CHECK(tr.state(1)[0] < tr.state(1)[5]);
}

TEST_CASE("time scaling is defined for Wishart and Dyson") {
  const auto d = time_scaled(build_model(ModelKind::Dyson, 4, {}), 2.0);
  REQUIRE(d.scaling.has_value());
  CHECK(d.scaling->a == 2.0);
  CHECK(d.diffusion_at(0.0, 0.0) == doctest::Approx(std::sqrt(2.0 / 4) / std::sqrt(2.0)));
  CHECK_THROWS_AS(time_scaled(build_model(ModelKind::OrnsteinUhlenbeck, 4, {}), 1.0), Error);
  CHECK_THROWS_AS(time_scaled(build_model(ModelKind::Dyson, 4, {}), 0.0), Error);
}
