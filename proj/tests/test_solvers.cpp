#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "mvavg/errors.hpp"
#include "mvavg/model.hpp"
#include "mvavg/solvers.hpp"
#include "mvavg/stats.hpp"
#include "support.hpp"

using namespace mvavg;
using testing::ScalarFns;
using testing::scalar_model;

namespace {

CoefficientSet ou_frozen(double kappa, double c, double sigma_y) {
  ScalarFns s;
  s.f = [kappa, c](double, double, double y) { return -kappa * (y - c); };
  s.g = [sigma_y](double, double, double) { return std::sqrt(2.0) * sigma_y; };
  s.b = [](double, double, double y) { return y; };
  s.beta = 2.0 * kappa;
  return scalar_model("ou", s);
}

}  // namespace

TEST_CASE("time grid validation") {
  CHECK(TimeGrid{1.0, 1.0 / 64, 4}.steps() == 64);
  CHECK_NOTHROW(TimeGrid{1.0, 1.0 / 64, 4}.validate());
  const TimeGrid ragged{1.0, 0.3, 1}, bad_stride{1.0, 1.0 / 64, 5}, empty{0.0, 0.1, 1};
  CHECK_THROWS_AS(ragged.steps(), std::invalid_argument);
  CHECK_THROWS_AS(bad_stride.validate(), std::invalid_argument);
  CHECK_THROWS_AS(empty.steps(), std::invalid_argument);
}

TEST_CASE("zero coefficients leave the state unchanged") {
  ScalarFns s;
  s.f = [](double, double, double) { return 0.0; };
  const auto m = scalar_model("still", s);
  const NoiseStream stream(1);
  SlowFastEnsemble ens(m, 0.1, 5, {{0.7}, {-0.3}}, stream, 0, 10);
  for (int k = 0; k < 10; ++k) ens.step(0.01);
  for (double v : ens.x()) CHECK(v == 0.7);
  for (double v : ens.y()) CHECK(v == -0.3);
  CHECK(ens.step_index() == 10);
  CHECK(ens.time() == doctest::Approx(0.1));
}

TEST_CASE("single linear step matches the hand-computed update") {
  const LinearBenchmarkParams p;
  const auto m = linear_benchmark(p);
  const double eps = 0.25, h = 0.01;
  const double x0 = 0.8, y0 = -0.4;
  const NoiseStream stream(2);
  SlowFastEnsemble ens(m, eps, 1, {{x0}, {y0}}, stream, 0, 1);
  const std::vector<double> dw1{0.013}, dw2{-0.021};
  ens.step_with_increments(h, dw1, dw2);
  const double mean = x0;
  const double x1 = x0 + (p.a1 * x0 + p.a2 * mean + p.a3 * y0) * h + p.sigma_x * dw1[0];
  const double y1 =
      y0 + (-p.kappa * (y0 - p.c1 * x0 - p.c2 * mean)) * h / eps + p.sigma_y * dw2[0] / std::sqrt(eps);
  CHECK(std::abs(ens.x()[0] - x1) <= 1e-14);
  CHECK(std::abs(ens.y()[0] - y1) <= 1e-14);

  // Drawn increments are the addressed N(0, h) values.
  SlowFastEnsemble fresh(m, eps, 2, {{x0}, {y0}}, stream, 3, 9);
  std::vector<double> a(2), b(2);
  fresh.draw_increments(h, a, b);
  CHECK(a[1] == stream.gaussian_increment({NoiseRole::Slow, 9, 3, 1, 0, 0}, h));
  CHECK(b[0] == stream.gaussian_increment({NoiseRole::Fast, 9, 3, 0, 0, 0}, h));
}

TEST_CASE("mirrored noise keeps mirrored particles mirrored") {
  const auto m = linear_benchmark({});
  const NoiseStream stream(3);
  SlowFastEnsemble ens(m, 0.1, 2, {{0.0}, {0.0}}, stream, 0, 1);
  const double h = 0.01;
  for (int k = 0; k < 200; ++k) {
    std::vector<double> dw1(2), dw2(2);
    ens.draw_increments(h, dw1, dw2);
    dw1[1] = -dw1[0];
    dw2[1] = -dw2[0];
    ens.step_with_increments(h, dw1, dw2);
    REQUIRE(ens.x()[1] == -ens.x()[0]);
    REQUIRE(ens.y()[1] == -ens.y()[0]);
  }
  CHECK(ens.x()[0] != 0.0);
}

TEST_CASE("deterministic fast relaxation follows the Euler recursion") {
  ScalarFns s;
  const auto m = scalar_model("relax", s);
  const NoiseStream stream(4);
  const double eps = 0.1, h = 0.01;
  SlowFastEnsemble ens(m, eps, 1, {{2.0}, {1.0}}, stream, 0, 1);
  for (int k = 1; k <= 50; ++k) {
    ens.step(h);
    CHECK(ens.y()[0] == doctest::Approx(std::pow(1.0 - h / eps, k)).epsilon(1e-12));
    CHECK(ens.x()[0] == 2.0);
  }
  CHECK(ens.y()[0] == doctest::Approx(std::exp(-0.5 / eps)).epsilon(0.1));
}

TEST_CASE("stability and finiteness guards") {
  const auto m = linear_benchmark({});
  const NoiseStream stream(5);
  SlowFastEnsemble ens(m, 0.01, 3, {{1.0}, {1.0}}, stream, 0, 1);
  const double bound = slowfast_step_bound(0.01, m.beta);
  try {
    ens.step(bound * 1.5);
    FAIL("expected a stability error");
  } catch (const StabilityError& e) {
    CHECK(e.bound() == doctest::Approx(bound));
    CHECK(std::string(e.what()).find("bound") != std::string::npos);
  }
  CHECK_NOTHROW(ens.step(bound));

  ScalarFns s;
  s.b = [](double x, double, double) { return x > 1.5 ? std::nan("") : 1.0; };
  const auto bad = scalar_model("nan", s);
  SlowFastEnsemble e2(bad, 0.5, 2, {{1.0}, {0.0}}, stream, 0, 1);
  try {
    for (int k = 0; k < 10; ++k) e2.step(0.125);
    FAIL("expected a non-finite state error");
  } catch (const NonFiniteStateError& e) {
    CHECK(e.particle() == 0);
    CHECK(e.time() == doctest::Approx(0.75));
  }
  CHECK_THROWS_AS(SlowFastEnsemble(m, 1.0, 1, {{1.0}, {1.0}}, stream, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(SlowFastEnsemble(m, 0.5, 0, {{1.0}, {1.0}}, stream, 0, 1), std::invalid_argument);
}

TEST_CASE("simulate_slowfast checkpoints and determinism") {
  const auto m = linear_benchmark({});
  const NoiseStream stream(6);
  const TimeGrid grid{1.0, 1.0 / 64, 8};
  const auto a = simulate_slowfast(m, 0.25, grid, 50, 2, stream, {{1.0}, {1.0}});
  const auto b = simulate_slowfast(m, 0.25, grid, 50, 2, stream, {{1.0}, {1.0}});
  REQUIRE(a.checkpoints.size() == 9);
  REQUIRE(a.moments.size() == 9);
  CHECK(a.checkpoints.back().t == doctest::Approx(1.0));
  for (std::size_t c = 0; c < 9; ++c) {
    CHECK(std::equal(a.checkpoints[c].x.data().begin(), a.checkpoints[c].x.data().end(),
                     b.checkpoints[c].x.data().begin()));
    CHECK(std::equal(a.checkpoints[c].y.data().begin(), a.checkpoints[c].y.data().end(),
                     b.checkpoints[c].y.data().begin()));
  }
  const auto other = simulate_slowfast(m, 0.25, grid, 50, 3, stream, {{1.0}, {1.0}});
  CHECK(other.checkpoints.back().x.data()[0] != a.checkpoints.back().x.data()[0]);
  CHECK(a.moments.front().m4_x == doctest::Approx(1.0));
  CHECK(a.moments.front().m2_y == doctest::Approx(1.0));
  CHECK_THROWS_AS(simulate_slowfast(m, 0.01, grid, 5, 0, stream, {{1.0}, {1.0}}), StabilityError);
}

TEST_CASE("ensemble moments") {
  const std::vector<double> x{1.0, 0.0, 2.0, 0.0};  // two particles in R^2
  const std::vector<double> y{1.0, -3.0};
  const MomentRow r = ensemble_moments(0.5, x, 2, y, 1);
  CHECK(r.m2_x == doctest::Approx(2.5));
  CHECK(r.m4_x == doctest::Approx(8.5));
  CHECK(r.m2_y == doctest::Approx(5.0));
  CHECK(r.m4_y == doctest::Approx(41.0));
}

TEST_CASE("slow-fast and averaged runs consume identical slow increments") {
  const auto m = linear_benchmark({});
  NoiseStream sf_stream(7), av_stream(7);
  auto sf_trace = std::make_shared<NoiseTrace>();
  auto av_trace = std::make_shared<NoiseTrace>();
  sf_stream.set_trace(sf_trace);
  av_stream.set_trace(av_trace);
  const double eps = 1.0 / 8;
  const std::size_t per = 4;
  const TimeGrid coarse{0.25, 1.0 / 32, 1};
  const TimeGrid fine{0.25, 1.0 / 128, 4};
  simulate_slowfast(m, eps, fine, 6, 1, sf_stream, {{1.0}, {1.0}});
  simulate_averaged(m, coarse, per, 6, 1, av_stream, std::vector<double>{1.0});
  auto slow_keys = [](const std::vector<NoiseKey>& keys) {
    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t, std::uint64_t>> out;
    for (const auto& k : keys)
      if (k.role == NoiseRole::Slow) out.emplace_back(k.grid, k.replicate, k.particle, k.component, k.step);
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto a = slow_keys(sf_trace->keys());
  const auto b = slow_keys(av_trace->keys());
  CHECK(a.size() == 6 * 32);
  CHECK(a == b);
}

TEST_CASE("pure-noise slow component is path-identical under coupling") {
  ScalarFns s;
  s.sigma = [](double, double) { return 1.0; };
  s.bbar = [](double, double) { return 0.0; };
  const auto m = scalar_model("bm", s);
  const NoiseStream stream(8);
  const TimeGrid coarse{1.0, 1.0 / 16, 4};
  const TimeGrid fine{1.0, 1.0 / 128, 32};
  const auto sf = simulate_slowfast(m, 0.5, fine, 20, 0, stream, {{0.0}, {0.0}});
  const auto av = simulate_averaged(m, coarse, 8, 20, 0, stream, std::vector<double>{0.0});
  REQUIRE(sf.checkpoints.size() == av.checkpoints.size());
  for (std::size_t c = 0; c < sf.checkpoints.size(); ++c)
    for (std::size_t i = 0; i < 20; ++i)
      CHECK(sf.checkpoints[c].x.row(i)[0] == doctest::Approx(av.checkpoints[c].x.row(i)[0]).epsilon(1e-12));
}

TEST_CASE("averaged Brownian motion has variance T") {
  ScalarFns s;
  s.sigma = [](double, double) { return 1.0; };
  s.bbar = [](double, double) { return 0.0; };
  const auto m = scalar_model("bm", s);
  const NoiseStream stream(9);
  const TimeGrid grid{2.0, 0.125, 16};
  std::vector<double> finals;
  for (std::uint32_t r = 0; r < 10; ++r) {
    const auto traj = simulate_averaged(m, grid, 1, 10000, r, stream, std::vector<double>{0.5});
    for (double v : traj.checkpoints.back().x.data()) finals.push_back(v - 0.5);
  }
  const double var = testing::variance_of(finals);
  CHECK(std::abs(var - 2.0) < 0.01 * 2.0 * 3.0);
  CHECK(std::abs(var - 2.0) < 3.0 * 2.0 * std::sqrt(2.0 / finals.size()));
}

TEST_CASE("averaged linear benchmark mean follows the scalar ODE") {
  const LinearBenchmarkParams p;
  const auto m = linear_benchmark(p);
  const double lambda = p.a1 + p.a3 * p.c1 + p.a2 + p.a3 * p.c2;
  const NoiseStream stream(10);
  const TimeGrid grid{1.0, 1.0 / 256, 64};
  std::vector<double> means;
  for (std::uint32_t r = 0; r < 8; ++r) {
    const auto traj = simulate_averaged(m, grid, 1, 4000, r, stream, std::vector<double>{1.0});
    means.push_back(traj.checkpoints.back().x.view().mean()[0]);
  }
  const Summary s = summarize(means);
  CHECK(std::abs(s.mean - std::exp(lambda)) < 3.0 * s.standard_error);
  CHECK(s.standard_error > 0.0);
}

TEST_CASE("analytic source requires a closed-form averaged drift") {
  const auto m = convolution_example();
  const NoiseStream stream(11);
  CHECK_THROWS_AS(simulate_averaged(m, TimeGrid{1.0, 0.25, 1}, 1, 3, 0, stream, std::vector<double>{0.0}),
                  std::invalid_argument);
}

TEST_CASE("ergodic drift estimate runs for a model without closed forms") {
  const auto m = convolution_example();
  const NoiseStream stream(12);
  AveragedDriftConfig drift;
  drift.source = DriftSource::ErgodicEstimate;
  drift.sampling = default_sampling(m.beta, 0.01, 50);
  drift.quantum = 0.05;
  AveragedEnsemble ens(m, 20, std::vector<double>{0.2}, stream, 0, 4, 0.25, 1, drift);
  ens.step();
  CHECK(ens.drift_evaluations() >= 1);
  CHECK(ens.drift_evaluations() <= 20);
  CHECK(ens.last_step_max_se() > 0.0);
  CHECK(ens.time() == doctest::Approx(0.25));
}

TEST_CASE("auxiliary process with block length h coincides with the slow-fast pair") {
  const auto m = linear_benchmark({});
  const NoiseStream stream(13);
  const double eps = 1.0 / 16;
  const double h = slowfast_step_bound(eps, m.beta);
  const TimeGrid grid{0.5, h, 4};
  const auto aux = simulate_auxiliary(m, eps, h, grid, 10, 0, stream, {{1.0}, {1.0}});
  REQUIRE(aux.y_gap.size() == grid.steps() + 1);
  CHECK(aux.sup_y_gap() == 0.0);
  CHECK(aux.sup_x_gap() == 0.0);
  const auto sf = simulate_slowfast(m, eps, grid, 10, 0, stream, {{1.0}, {1.0}});
  CHECK(std::equal(aux.checkpoints.back().x.data().begin(), aux.checkpoints.back().x.data().end(),
                   sf.checkpoints.back().x.data().begin()));

  const auto coarse = simulate_auxiliary(m, eps, 8 * h, grid, 10, 0, stream, {{1.0}, {1.0}});
  CHECK(coarse.sup_y_gap() > 0.0);
  CHECK(coarse.y_gap.front() == 0.0);
  CHECK_THROWS_AS(simulate_auxiliary(m, eps, 1.5 * h, grid, 10, 0, stream, {{1.0}, {1.0}}), std::invalid_argument);
}

TEST_CASE("frozen OU relaxes to its centre") {
  const auto m = ou_frozen(1.0, 0.7, 0.5);
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const auto mu = cloud.view();
  const NoiseStream stream(14);
  std::vector<double> ends;
  for (std::uint32_t j = 0; j < 2000; ++j) {
    const auto path = simulate_frozen(m, 0.0, std::vector<double>{0.0}, mu, std::vector<double>{3.0}, 10.0, 0.01,
                                      stream, FrozenKey{0, j, 0});
    ends.push_back(path.at(path.nodes() - 1)[0]);
  }
  const double mean = testing::mean_of(ends);
  const double se = std::sqrt(testing::variance_of(ends) / ends.size());
  const double expected = 0.7 + std::exp(-10.0) * (3.0 - 0.7);
  CHECK(std::abs(mean - expected) < 3.0 * se);
}

TEST_CASE("frozen deterministic decay and contraction") {
  ScalarFns s;
  const auto m = scalar_model("decay", s);
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const NoiseStream stream(15);
  const auto path = simulate_frozen(m, 0.0, std::vector<double>{0.0}, cloud.view(), std::vector<double>{1.0}, 2.0,
                                    0.01, stream);
  for (std::size_t k = 0; k < path.nodes(); k += 20)
    CHECK(path.at(k)[0] == doctest::Approx(std::pow(0.99, static_cast<double>(k))).epsilon(1e-12));

  const auto lin = linear_benchmark({});
  const auto mu = ParticleCloud::from_scalars({1.0}).view();
  const std::vector<double> x{1.0}, y1{5.0}, y2{-3.0};
  const auto a = simulate_frozen(lin, 0.0, x, mu, y1, 3.0, 0.01, stream, {2, 1, 0});
  const auto b = simulate_frozen(lin, 0.0, x, mu, y2, 3.0, 0.01, stream, {2, 1, 0});
  for (std::size_t k = 0; k < a.nodes(); ++k) {
    const double sk = static_cast<double>(k) * 0.01;
    const double d = a.at(k)[0] - b.at(k)[0];
    CHECK(d * d <= std::exp(-lin.beta * sk) * 64.0 * 1.1);
  }
  CHECK_THROWS_AS(simulate_frozen(lin, 0.0, x, mu, y1, 1.0, 0.2, stream), StabilityError);
}

TEST_CASE("invariant samples of an OU process") {
  const double kappa = 1.0, c = -0.4, sigma_y = 0.8;
  const auto m = ou_frozen(kappa, c, sigma_y);
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const NoiseStream stream(16);
  const auto sampling = default_sampling(m.beta, 0.01, 3000);
  const ParticleCloud samples = sample_invariant(m, 0.0, std::vector<double>{0.0}, cloud.view(), sampling, stream);
  REQUIRE(samples.size() == 3000);
  std::vector<double> v(samples.data().begin(), samples.data().end());
  std::vector<double> sq;
  for (double y : v) sq.push_back((y - c) * (y - c));
  const Summary mean = summarize(v);
  const Summary var = summarize(sq);
  CHECK(std::abs(mean.mean - c) < 3.0 * mean.standard_error);
  CHECK(std::abs(var.mean - sigma_y * sigma_y / kappa) < 3.0 * var.standard_error);

  // First-moment growth bound against the frozen arguments.
  double abs_mean = 0.0;
  for (double y : v) abs_mean += std::abs(y) / static_cast<double>(v.size());
  const double constant = abs_mean / (1.0 + 0.0 + std::sqrt(cloud.view().second_moment()));
  CHECK(std::isfinite(constant));
  CHECK(constant < 2.0);

  InvariantSampling single = sampling;
  single.thin_steps = kInfiniteThin;
  const auto one = sample_invariant(m, 0.0, std::vector<double>{0.0}, cloud.view(), single, stream);
  CHECK(one.size() == 1);
  CHECK(one.dim() == 1);

  InvariantSampling short_burn = sampling;
  short_burn.burn_in = 0.1;
  CHECK_THROWS_AS(sample_invariant(m, 0.0, std::vector<double>{0.0}, cloud.view(), short_burn, stream),
                  std::invalid_argument);
}

TEST_CASE("estimate_bbar against closed forms") {
  const auto lin = linear_benchmark({});
  const NoiseStream stream(17);
  const auto sampling = default_sampling(lin.beta, 0.01, 2000);
  for (double x : {-1.0, 0.5, 2.0}) {
    const auto cloud = ParticleCloud::from_scalars({x - 0.5, x + 1.5});
    const auto mu = cloud.view();
    const std::vector<double> xv{x};
    const auto est = estimate_bbar(lin, 0.0, xv, mu, sampling, stream);
    std::vector<double> exact(1);
    (*lin.averaged_drift)(0.0, xv, mu, exact);
    CHECK(est.n_samples == 2000);
    CHECK(std::abs(est.value[0] - exact[0]) < 3.0 * est.standard_error[0]);
  }

  ScalarFns s;
  s.b = [](double x, double, double) { return 2.0 * x + 1.0; };
  s.g = [](double, double, double) { return 1.0; };
  const auto flat = scalar_model("flat", s);
  const auto mu = ParticleCloud::from_scalars({0.0}).view();
  const auto est = estimate_bbar(flat, 0.0, std::vector<double>{0.25}, mu, default_sampling(2.0, 0.01, 100), stream);
  CHECK(est.value[0] == 1.5);
  CHECK(est.standard_error[0] == 0.0);
}

TEST_CASE("batch means standard error of an iid series") {
  const NoiseStream stream(18);
  std::vector<double> v;
  for (std::uint32_t i = 0; i < 20000; ++i) v.push_back(stream.standard_normal({NoiseRole::Probe, 5, 0, i, 0, 0}));
  const double se = batch_means_se(v, 20);
  CHECK(se == doctest::Approx(1.0 / std::sqrt(20000.0)).epsilon(0.5));
}
