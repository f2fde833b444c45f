#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mvavg/measure.hpp"
#include "mvavg/noise.hpp"

using namespace mvavg;

namespace {

// Brute force over all permutations; independent of the assignment solver.
double w2_bruteforce(const ParticleCloud& a, const ParticleCloud& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < a.dim(); ++c) cost += std::pow(a.row(i)[c] - b.row(perm[i])[c], 2);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(n));
}

ParticleCloud random_cloud(const NoiseStream& s, std::uint32_t tag, std::size_t n, std::size_t d) {
  std::vector<double> pts(n * d);
  for (std::size_t i = 0; i < n * d; ++i)
    pts[i] = s.standard_normal({NoiseRole::Probe, 9, tag, static_cast<std::uint32_t>(i), 0, 0});
  return ParticleCloud(n, d, pts);
}

}  // namespace

TEST_CASE("empirical measure summaries") {
  const ParticleCloud c(3, 2, {1.0, 2.0, 3.0, 4.0, -1.0, 0.0});
  const auto mu = c.view();
  CHECK(mu.mean()[0] == doctest::Approx(1.0));
  CHECK(mu.mean()[1] == doctest::Approx(2.0));
  CHECK(mu.second_moment() == doctest::Approx((5.0 + 25.0 + 1.0) / 3.0));
  const double mean_sq = mu.mean()[0] * mu.mean()[0] + mu.mean()[1] * mu.mean()[1];
  CHECK(mu.second_moment() >= mean_sq);
  CHECK(mu.integrate(ScalarTest([](ConstVec) { return 2.5; })) == doctest::Approx(2.5));
  std::vector<double> out(2);
  mu.integrate(VectorTest([](ConstVec z, MutVec o) {
                 o[0] = z[0] * z[1];
                 o[1] = 1.0;
               }),
               out);
  CHECK(out[0] == doctest::Approx((2.0 + 12.0 + 0.0) / 3.0));
  CHECK(out[1] == doctest::Approx(1.0));
}

TEST_CASE("features are integrated once per view") {
  const std::vector<ScalarTest> feats{[](ConstVec z) { return std::cos(z[0]); }, [](ConstVec z) { return z[0]; }};
  const ParticleCloud c = ParticleCloud::from_scalars({0.0, 1.0, 2.0});
  const auto mu = c.view(&feats);
  REQUIRE(mu.features().size() == 2);
  CHECK(mu.features()[0] == doctest::Approx((1.0 + std::cos(1.0) + std::cos(2.0)) / 3.0));
  CHECK(mu.features()[1] == doctest::Approx(1.0));
  CHECK(c.view().features().empty());
}

TEST_CASE("cloud construction validates input") {
  CHECK_THROWS_AS(ParticleCloud(0, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(ParticleCloud(2, 1, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(ParticleCloud(1, 1, {std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(ParticleCloud(1, 1, {INFINITY}), std::invalid_argument);
  const ParticleCloud d = ParticleCloud::dirac(std::vector<double>{1.0, -2.0});
  CHECK(d.size() == 1);
  CHECK(d.dim() == 2);
}

TEST_CASE("w2_1d on small examples") {
  const auto a = ParticleCloud::from_scalars({0.3, -1.0, 2.0});
  CHECK(w2_1d(a, a) == 0.0);
  CHECK(w2_1d(ParticleCloud::from_scalars({0.0}), ParticleCloud::from_scalars({3.0})) == doctest::Approx(3.0));
  CHECK(w2_1d(ParticleCloud::from_scalars({0.0, 1.0}), ParticleCloud::from_scalars({1.0, 2.0})) ==
        doctest::Approx(w2_bruteforce(ParticleCloud::from_scalars({0.0, 1.0}), ParticleCloud::from_scalars({1.0, 2.0}))));
  CHECK(w2_1d(ParticleCloud::from_scalars({0.0, 1.0}), ParticleCloud::from_scalars({1.0, 2.0})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(w2_1d(a, ParticleCloud::from_scalars({1.0})), std::invalid_argument);
}

TEST_CASE("exact assignment matches the permutation oracle") {
  const NoiseStream s(11);
  for (std::uint32_t trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + trial % 7;
    const std::size_t d = 1 + trial % 3;
    const auto a = random_cloud(s, 2 * trial, n, d);
    const auto b = random_cloud(s, 2 * trial + 1, n, d);
    CHECK(w2_exact_small(a, b) == doctest::Approx(w2_bruteforce(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("exact assignment agrees with sorted coupling in one dimension") {
  const NoiseStream s(12);
  for (std::uint32_t trial = 0; trial < 20; ++trial) {
    const auto a = random_cloud(s, 2 * trial, 4, 1);
    const auto b = random_cloud(s, 2 * trial + 1, 4, 1);
    CHECK(std::abs(w2_exact_small(a, b) - w2_1d(a, b)) <= 1e-12);
  }
}

TEST_CASE("exact assignment properties") {
  const ParticleCloud a(2, 2, {0.0, 0.0, 1.0, 0.0});
  const ParticleCloud b(2, 2, {1.0, 0.0, 0.0, 0.0});
  CHECK(w2_exact_small(a, b) == doctest::Approx(0.0).epsilon(1e-15));
  const NoiseStream s(13);
  const auto big = random_cloud(s, 1, kExactAssignmentLimit + 1, 1);
  CHECK_THROWS_WITH_AS(w2_exact_small(big, big), doctest::Contains("w2_sliced"), std::invalid_argument);

  for (std::uint32_t trial = 0; trial < 20; ++trial) {
    const auto x = random_cloud(s, 3 * trial + 10, 6, 2);
    const auto y = random_cloud(s, 3 * trial + 11, 6, 2);
    const auto z = random_cloud(s, 3 * trial + 12, 6, 2);
    const double xy = w2_exact_small(x, y);
    CHECK(xy == doctest::Approx(w2_exact_small(y, x)).epsilon(1e-12));
    CHECK(xy <= w2_exact_small(x, z) + w2_exact_small(z, y) + 1e-12);
    double identity = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t c = 0; c < 2; ++c) identity += std::pow(x.row(i)[c] - y.row(i)[c], 2);
    CHECK(xy <= std::sqrt(identity / 6.0) + 1e-12);
  }
}

TEST_CASE("minimum cost assignment") {
  const std::vector<double> cost{4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto assign = min_cost_assignment(cost, 3);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) total += cost[i * 3 + assign[i]];
  CHECK(total == doctest::Approx(5.0));
  std::vector<std::size_t> sorted = assign;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("sliced W2") {
  const NoiseStream s(14);
  const auto a1 = random_cloud(s, 1, 50, 1);
  const auto b1 = random_cloud(s, 2, 50, 1);
  for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
    CHECK(w2_sliced(a1, b1, 5, seed) == w2_1d(a1, b1));
    CHECK(w2_sliced(a1, a1, 5, seed) == 0.0);
  }
  for (std::uint32_t trial = 0; trial < 10; ++trial) {
    const auto a = random_cloud(s, 100 + 2 * trial, 8, 2);
    const auto b = random_cloud(s, 101 + 2 * trial, 8, 2);
    const double exact = w2_exact_small(a, b);
    const double sliced = w2_sliced(a, b, 200, trial);
    CHECK(sliced <= 2.0 * exact);
    CHECK(sliced >= 0.5 * exact);
    CHECK(w2_sliced(a, b, 200, trial) == sliced);
    CHECK(w2_sliced(a, a, 200, trial) == 0.0);
  }
  CHECK_THROWS_AS(w2_sliced(a1, b1, 0, 1), std::invalid_argument);
}

TEST_CASE("translation leaves all three distances unchanged") {
  const NoiseStream s(15);
  const auto a = random_cloud(s, 1, 6, 2);
  const auto b = random_cloud(s, 2, 6, 2);
  const std::vector<double> v{0.75, -1.5};
  CHECK(w2_exact_small(a.translated(v), b.translated(v)) == doctest::Approx(w2_exact_small(a, b)).epsilon(1e-12));
  CHECK(w2_sliced(a.translated(v), b.translated(v), 50, 3) == doctest::Approx(w2_sliced(a, b, 50, 3)).epsilon(1e-12));
  const auto a1 = random_cloud(s, 3, 6, 1);
  const auto b1 = random_cloud(s, 4, 6, 1);
  const std::vector<double> u{2.0};
  CHECK(w2_1d(a1.translated(u), b1.translated(u)) == doctest::Approx(w2_1d(a1, b1)).epsilon(1e-12));
}

TEST_CASE("cloud CSV output") {
  std::ostringstream os;
  write_cloud_csv(os, ParticleCloud(2, 2, {1.0, 0.5, -2.0, 3.0}));
  CHECK(os.str() == "particle,z1,z2\n0,1,0.5\n1,-2,3\n");
}
