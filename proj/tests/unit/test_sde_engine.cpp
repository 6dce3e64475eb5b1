#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "eigenclt/ensembles.hpp"
#include "eigenclt/error.hpp"
#include "eigenclt/sde_engine.hpp"
#include "support.hpp"

using namespace eigenclt;

TEST_CASE("step with identity dynamics only advances time") {
  const auto s = build_model(ModelKind::ParticleSystem, 3,
                             {{"s0", 0}, {"s1", 0}, {"k0", 0}, {"k1", 0}, {"b0", 0}, {"b1", 0}});
  const ParticleState st{0.5, {-1.0, 0.2, 3.0}};
  const std::vector<double> noise(3, 0.0);
  const auto out = step(s, st, 0.1, noise);
  CHECK(out.time == doctest::Approx(0.6));
  CHECK(out.positions == st.positions);
}

TEST_CASE("Euler step hand value") {
  const auto s = build_model(ModelKind::Dyson, 2, {});
  const auto out = step(s, {0.0, {-1.0, 1.0}}, 0.01, std::vector<double>{0, 0});
  CHECK(out.positions[0] == doctest::Approx(-1.0025));
  CHECK(out.positions[1] == doctest::Approx(1.0025));
}

TEST_CASE("Wishart step clamps at zero") {
  const auto s = build_model(ModelKind::Wishart, 1, {{"P", 1}});
  const auto out = step(s, {0.0, {1e-4}}, 1e-3, std::vector<double>{-10.0});
  CHECK(out.positions[0] == 0.0);
}

TEST_CASE("time grid") {
  const auto g = time_grid(1.0, 0.25);
  REQUIRE(g.size() == 5);
  CHECK(g.back() == 1.0);
  const auto h = time_grid(1.0, 0.3);
  CHECK(h.back() == 1.0);
  CHECK(h.size() == 5);
  CHECK(time_grid(0.0, 0.1).size() == 1);
}

TEST_CASE("zero horizon returns the initial state") {
  const auto s = build_model(ModelKind::Dyson, 3, {});
  const std::vector<double> init{-1, 0, 1};
  const auto tr = simulate(s, init, 0.0, {}, 1, false);
  REQUIRE(tr.size() == 1);
  CHECK(std::vector<double>(tr.state(0).begin(), tr.state(0).end()) == init);
}

TEST_CASE("single Dyson particle is a scaled Brownian motion") {
  const auto s = build_model(ModelKind::Dyson, 1, {});
  StepControl c;
  c.dt = 0.05;
  std::vector<double> end;
  for (std::uint32_t r = 0; r < 4000; ++r) {
    const auto tr = simulate(s, std::vector<double>{0.0}, 1.0, c, 11, false, r);
    end.push_back(tr.state(tr.size() - 1)[0]);
  }
  const auto m = testing::summarize(end);
  CHECK(testing::within(m.mean, 0.0, m.se_mean));
  CHECK(testing::within(m.var, 2.0, m.se_var));
}

TEST_CASE("every stored state is sorted") {
  const auto s = build_model(ModelKind::Dyson, 50, {});
  const auto init = sample_scaled_goe(50, 3).positions;
  const auto tr = simulate(s, init, 1.0, {}, 4, false);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto x = tr.state(k);
    CHECK(std::is_sorted(x.begin(), x.end()));
    for (double v : x) CHECK(std::isfinite(v));
  }
}

TEST_CASE("Wishart paths stay nonnegative and sorted") {
  const auto s = build_model(ModelKind::Wishart, 20, {{"P", 21}});
  const auto init = sample_scaled_laguerre(20, 21, 9).positions;
  const auto tr = simulate(s, init, 1.0, {}, 5, false);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto x = tr.state(k);
    CHECK(std::is_sorted(x.begin(), x.end()));
    CHECK(x[0] >= 0.0);
  }
}

TEST_CASE("simulation is a pure function of seed and replica") {
  const auto s = build_model(ModelKind::OrnsteinUhlenbeck, 10, {});
  const auto init = sample_scaled_goe(10, 1).positions;
  const auto a = simulate(s, init, 0.5, {}, 7, true, 3);
  const auto b = simulate(s, init, 0.5, {}, 7, true, 3);
  const auto c = simulate(s, init, 0.5, {}, 7, true, 4);
  CHECK(a.states == b.states);
  CHECK(a.noise == b.noise);
  CHECK(a.states != c.states);
}

TEST_CASE("recorded noise has Brownian increments") {
  const auto s = build_model(ModelKind::Dyson, 4, {});
  StepControl c;
  c.dt = 0.01;
  const auto tr = simulate(s, std::vector<double>{-1, -0.3, 0.3, 1}, 1.0, c, 2, true);
  REQUIRE(tr.has_noise);
  std::vector<double> z;
  for (std::size_t k = 0; k + 1 < tr.size(); ++k)
    for (double w : tr.increment(k)) z.push_back(w / std::sqrt(0.01));
  const auto m = testing::summarize(z);
  CHECK(testing::within(m.var, 1.0, m.se_var));
}

TEST_CASE("refining dt does not change the Dyson first moment law") {
  // <x, L_N> is exactly a Brownian motion; the pair drift cancels.
  const auto s = build_model(ModelKind::Dyson, 10, {});
  const auto init = sample_scaled_goe(10, 1).positions;
  double init_mean = 0;
  for (double v : init) init_mean += v / 10;
  std::vector<double> end;
  for (std::uint32_t r = 0; r < 1000; ++r) {
    const auto tr = simulate(s, init, 1.0, {}, 21, false, r);
    double m = 0;
    for (double v : tr.state(tr.size() - 1)) m += v / 10;
    end.push_back(m);
  }
  const auto m = testing::summarize(end);
  CHECK(testing::within(m.mean, init_mean, m.se_mean));
  CHECK(testing::within(m.var, 2.0 / 100, m.se_var));
}

TEST_CASE("invalid control is rejected") {
  const auto s = build_model(ModelKind::Dyson, 2, {});
  StepControl c;
  c.dt = -1;
  CHECK_THROWS_AS(simulate(s, std::vector<double>{0, 1}, 1.0, c, 1, false), Error);
  CHECK_THROWS_AS(simulate(s, std::vector<double>{0}, 1.0, {}, 1, false), Error);
}

TEST_CASE("coupled simulation") {
  SUBCASE("identical inputs give bit-identical paths") {
    const auto s = build_model(ModelKind::Dyson, 8, {});
    const auto init = sample_scaled_goe(8, 2).positions;
    const auto [a, b] = coupled_simulate(s, s, init, init, 1.0, {}, 5);
    CHECK(a.states == b.states);
  }
  SUBCASE("drift comparison for Dyson") {
    const auto lo = build_model(ModelKind::DysonDrifted, 20, {{"c", -1}});
    const auto hi = build_model(ModelKind::DysonDrifted, 20, {{"c", 1}});
    const auto init = sample_scaled_goe(20, 6).positions;
    const auto [a, b] = coupled_simulate(lo, hi, init, init, 1.0, {}, 8);
    const auto rep = check_ordering(a, b);
    CHECK(rep.fraction == 1.0);
    CHECK_FALSE(rep.has_violation);
  }
  SUBCASE("drift comparison for Wishart") {
    const auto lo = build_model(ModelKind::Wishart, 10, {{"P", 11}});
    const auto hi = build_model(ModelKind::Wishart, 10, {{"P", 20}});
    const auto init = sample_scaled_laguerre(10, 11, 6).positions;
    const auto [a, b] = coupled_simulate(lo, hi, init, init, 1.0, {}, 8);
    CHECK(check_ordering(a, b).fraction == 1.0);
  }
  SUBCASE("different noise structures are rejected") {
    const auto a = build_model(ModelKind::Dyson, 4, {});
    const auto b = build_model(ModelKind::Wishart, 4, {{"P", 5}});
    const std::vector<double> init{0.1, 0.2, 0.3, 0.4};
    CHECK_THROWS_AS(coupled_simulate(a, b, init, init, 1.0, {}, 1), Error);
  }
}

TEST_CASE("check_ordering on shifted paths") {
  const auto s = build_model(ModelKind::Dyson, 5, {});
  const auto tr = simulate(s, std::vector<double>{-2, -1, 0, 1, 2}, 0.2, {}, 3, false);
  CHECK(check_ordering(tr, tr).fraction == 1.0);
  CHECK_FALSE(check_ordering(tr, tr).has_violation);
  auto up = tr, down = tr;
  for (auto& v : up.states) v += 1;
  for (auto& v : down.states) v -= 1;
  CHECK(check_ordering(tr, up).fraction == 1.0);
  const auto rep = check_ordering(tr, down);
  CHECK(rep.fraction == 0.0);
  CHECK(rep.has_violation);
  CHECK(rep.first_time == tr.grid[0]);
  CHECK(rep.first_index == 0);
}
