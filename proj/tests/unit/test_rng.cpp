#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "eigenclt/rng.hpp"
#include "support.hpp"

using namespace eigenclt;

TEST_CASE("philox4x32-10 known answers") {
  // Reference vectors of the Random123 distribution.
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) ==
        PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                      {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                      {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("unit conversion stays in (0, 1]") {
  CHECK(to_unit_open0(0, 0) > 0.0);
  CHECK(to_unit_open0(0xffffffff, 0xffffffff) == doctest::Approx(1.0));
  CHECK(to_unit_open0(0xffffffff, 0xffffffff) <= 1.0);
}

TEST_CASE("streams are pure functions of their coordinates") {
  const CounterRng a(42, Domain::SdeNoise), b(42, Domain::SdeNoise);
  const CounterRng other_domain(42, Domain::Ensemble), other_seed(43, Domain::SdeNoise);
  const auto x = a.normal_pair(3, 7, 11, 1);
  CHECK(x == b.normal_pair(3, 7, 11, 1));
  CHECK(x != other_domain.normal_pair(3, 7, 11, 1));
  CHECK(x != other_seed.normal_pair(3, 7, 11, 1));
  CHECK(x != a.normal_pair(4, 7, 11, 1));
  CHECK(x != a.normal_pair(3, 7, 12, 1));
  CHECK(x != a.normal_pair(3, 7, 11, 2));
}

TEST_CASE("fill_normals pairs particles 2k and 2k+1 on counter k") {
  const CounterRng rng(5, Domain::SdeNoise);
  std::vector<double> out(7);
  rng.fill_normals(2, 9, 1, out);
  for (std::uint32_t k = 0; k < 4; ++k) {
    const auto p = rng.normal_pair(2, k, 9, 1);
    CHECK(out[2 * k] == p[0]);
    if (2 * k + 1 < out.size()) CHECK(out[2 * k + 1] == p[1]);
  }
}

TEST_CASE("normal draws have unit variance and are uncorrelated within a pair") {
  const CounterRng rng(2024, Domain::Scratch);
  std::vector<double> a, b, prod;
  for (std::uint32_t i = 0; i < 50000; ++i) {
    const auto p = rng.normal_pair(0, i, 0, 0);
    a.push_back(p[0]);
    b.push_back(p[1]);
    prod.push_back(p[0] * p[1]);
  }
  const auto sa = testing::summarize(a), sb = testing::summarize(b), sp = testing::summarize(prod);
  CHECK(testing::within(sa.mean, 0.0, sa.se_mean));
  CHECK(testing::within(sa.var, 1.0, sa.se_var));
  CHECK(testing::within(sb.var, 1.0, sb.se_var));
  CHECK(testing::within(sp.mean, 0.0, sp.se_mean));
  auto ks = ks_normal(a, 0.0, 1.0);
  CHECK(ks.pass);
}

TEST_CASE("uniform pairs are uniform and distinct from the normal counters") {
  const CounterRng rng(8, Domain::Bootstrap);
  std::vector<double> u;
  for (std::uint32_t i = 0; i < 20000; ++i) {
    const auto p = rng.uniform_pair(1, i, 0, 0);
    CHECK(p[0] > 0.0);
    CHECK(p[0] <= 1.0);
    u.push_back(p[0]);
  }
  const auto s = testing::summarize(u);
  CHECK(testing::within(s.mean, 0.5, s.se_mean));
  CHECK(testing::within(s.var, 1.0 / 12.0, s.se_var));
}

TEST_CASE("sequential stream is reproducible") {
  const CounterRng rng(77, Domain::MatrixOracle);
  NormalStream s1(rng, 0, 3), s2(rng, 0, 3);
  for (int i = 0; i < 9; ++i) CHECK(s1.next() == s2.next());
  NormalStream s3(rng, 0, 3);
  const auto p = rng.normal_pair(0, 0, 3, 0);
  CHECK(s3.next() == p[0]);
  CHECK(s3.next() == p[1]);
}
