#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mvavg/model.hpp"
#include "mvavg/poisson.hpp"
#include "mvavg/stats.hpp"
#include "support.hpp"

using namespace mvavg;

namespace {

// Closed-form Phi of the linear benchmark, written out independently:
// Y relaxes to c1 x + c2 m at rate kappa, so the integral of a3 E[Y_s - ybar]
// is a3 (y - ybar) / kappa.
double linear_phi(const LinearBenchmarkParams& p, double x, double m, double y) {
  return p.a3 * (y - p.c1 * x - p.c2 * m) / p.kappa;
}

double linear_bbar(const LinearBenchmarkParams& p, double x, double m) {
  return p.a1 * x + p.a2 * m + p.a3 * (p.c1 * x + p.c2 * m);
}

}  // namespace

TEST_CASE("minimum horizon") {
  CHECK(minimum_phi_horizon(4.0, 1e-4) == doctest::Approx(0.5 * std::log(1e4)));
}

TEST_CASE("Phi vanishes when b does not depend on y") {
  testing::ScalarFns s;
  s.b = [](double x, double m, double) { return x - m; };
  s.g = [](double, double, double) { return 1.0; };
  const auto model = testing::scalar_model("flat", s);
  const auto cloud = ParticleCloud::from_scalars({0.3});
  const std::vector<double> x{1.0}, y{2.0}, bbar{0.7};
  PhiConfig cfg;
  cfg.s_max = minimum_phi_horizon(model.beta, 1e-4);
  cfg.n_traj = 200;
  const auto est = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, NoiseStream(1), bbar);
  CHECK(std::abs(est.value[0]) < 1e-12);
  CHECK(est.standard_error[0] < 1e-12);
  CHECK_FALSE(est.tail_warning);
}

TEST_CASE("Monte Carlo Phi matches the closed form on the linear benchmark") {
  const LinearBenchmarkParams p;
  const auto model = linear_benchmark(p);
  const NoiseStream stream(2);
  PhiConfig cfg;
  cfg.s_max = minimum_phi_horizon(model.beta, 1e-4);
  cfg.n_traj = 10000;
  const std::vector<std::vector<double>> points{{0.0, 0.0, 1.0}, {1.0, -0.5, -2.0}, {-1.0, 2.0, 0.5}};
  for (const auto& pt : points) {
    const auto cloud = ParticleCloud::from_scalars({pt[1]});
    const std::vector<double> x{pt[0]}, y{pt[2]}, bbar{linear_bbar(p, pt[0], pt[1])};
    const auto est = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
    const double exact = linear_phi(p, pt[0], pt[1], pt[2]);
    CHECK(std::abs(est.value[0] - exact) < 3.0 * est.standard_error[0] + 1e-12);
    CHECK(est.tail_bound < 1e-3);
  }
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const std::vector<double> x{0.0}, y{1.0}, bbar{0.0};
  const auto est = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
  CHECK(linear_phi(p, 0.0, 0.0, 1.0) == 0.5);
  CHECK(std::abs(est.value[0] - 0.5) < 3.0 * est.standard_error[0]);
}

TEST_CASE("truncation error stays inside the tail bound") {
  const LinearBenchmarkParams p;
  const auto model = linear_benchmark(p);
  const NoiseStream stream(3);
  const auto cloud = ParticleCloud::from_scalars({0.5});
  const std::vector<double> x{0.2}, y{3.0}, bbar{linear_bbar(p, 0.2, 0.5)};
  PhiConfig shorter;
  shorter.s_max = 1.0;
  shorter.n_traj = 2000;
  PhiConfig longer = shorter;
  longer.s_max = 2.0 * minimum_phi_horizon(model.beta, 1e-4);
  const auto a = estimate_phi(model, 0.0, x, cloud.view(), y, shorter, stream, bbar);
  const auto b = estimate_phi(model, 0.0, x, cloud.view(), y, longer, stream, bbar);
  CHECK(a.tail_warning);
  CHECK_FALSE(b.tail_warning);
  const double se_diff = std::hypot(a.standard_error[0], b.standard_error[0]);
  CHECK(std::abs(a.value[0] - b.value[0]) <= a.tail_bound + 3.0 * se_diff);
  CHECK(a.tail_bound > b.tail_bound);
}

TEST_CASE("Monte Carlo standard error decays like n^{-1/2}") {
  const auto model = linear_benchmark({});
  const NoiseStream stream(4);
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const std::vector<double> x{0.0}, y{1.0}, bbar{0.0};
  PhiConfig cfg;
  cfg.s_max = minimum_phi_horizon(model.beta, 1e-4);
  std::vector<double> log_n, log_se;
  for (std::size_t n : {100u, 400u, 1600u, 6400u}) {
    cfg.n_traj = n;
    const auto est = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
    log_n.push_back(std::log(static_cast<double>(n)));
    log_se.push_back(std::log(est.standard_error[0]));
  }
  const LineFit fit = weighted_line_fit(log_n, log_se);
  CHECK(std::abs(fit.slope + 0.5) < 0.15);
}

TEST_CASE("Phi grows at most linearly in |y|") {
  const LinearBenchmarkParams p;
  const auto model = linear_benchmark(p);
  const NoiseStream stream(5);
  const auto cloud = ParticleCloud::from_scalars({0.0});
  PhiConfig cfg;
  cfg.s_max = minimum_phi_horizon(model.beta, 1e-4);
  cfg.n_traj = 2000;
  double constant = 0.0;
  for (double yv : {-8.0, -2.0, 0.0, 2.0, 8.0}) {
    const std::vector<double> x{0.0}, y{yv}, bbar{0.0};
    const auto est = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
    constant = std::max(constant, std::abs(est.value[0]) / (1.0 + std::abs(yv)));
  }
  // |Phi| = |a3 y| / kappa <= (1 + |y|) a3 / kappa
  CHECK(constant <= p.a3 / p.kappa * 1.05);
}

TEST_CASE("estimate_phi is worker-count invariant") {
  const auto model = convolution_example();
  const NoiseStream stream(6);
  const auto cloud = ParticleCloud::from_scalars({0.1, -0.4, 0.9});
  const std::vector<double> x{0.3}, y{1.0}, bbar{0.05};
  PhiConfig cfg;
  cfg.s_max = 2.0;
  cfg.n_traj = 64;
  cfg.h_frozen = 0.01;
  cfg.workers = 1;
  const auto a = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
  cfg.workers = 3;
  const auto b = estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar);
  CHECK(a.value[0] == b.value[0]);
  CHECK(a.standard_error[0] == b.standard_error[0]);
}

TEST_CASE("estimate_phi rejects bad input") {
  const auto model = linear_benchmark({});
  const auto cloud = ParticleCloud::from_scalars({0.0});
  const std::vector<double> x{0.0}, y{1.0}, bbar{0.0}, wrong{0.0, 1.0};
  const NoiseStream stream(7);
  PhiConfig cfg;
  cfg.n_traj = 0;
  CHECK_THROWS_AS(estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar), std::invalid_argument);
  cfg = PhiConfig{};
  CHECK_THROWS_AS(estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, wrong), std::invalid_argument);
  cfg.h_frozen = 1.0;
  CHECK_THROWS(estimate_phi(model, 0.0, x, cloud.view(), y, cfg, stream, bbar));
}

TEST_CASE("generator residual of the closed-form Phi") {
  const auto model = linear_benchmark({});
  std::vector<ResidualPoint> points;
  for (double yv : {-2.0, -1.0, 0.0, 1.0, 2.0})
    points.push_back({0.0, {0.5}, ParticleCloud::from_scalars({1.0, -1.5, 0.5, 0.0}), {yv}});
  CHECK(residual_check(model, points, 1e-4) <= 1e-8);

  // Away from dyadic arguments the second difference of a linear Phi is
  // pure rounding, of order ulp(Phi) / h^2.
  const NoiseStream stream(8);
  for (std::uint32_t k = 0; k < 200; ++k) {
    auto draw = [&](std::uint32_t c) { return 1.5 * stream.standard_normal({NoiseRole::Probe, 8, k, c, 0, 0}); };
    const double x = draw(0), y = draw(3);
    const ResidualPoint pt{0.0, {x}, ParticleCloud::from_scalars({draw(1), draw(2)}), {y}};
    std::vector<double> phi(1);
    const auto mu = pt.mu.view();
    (*model.poisson_solution)(0.0, pt.x, mu, pt.y, phi);
    const double floor = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(phi[0]) + std::abs(y)) / 1e-8;
    CHECK(residual_check(model, std::span<const ResidualPoint>(&pt, 1), 1e-4) <= floor);
  }

  LinearBenchmarkParams decoupled;
  decoupled.a3 = 0.0;
  CHECK(residual_check(linear_benchmark(decoupled), points, 1e-4) == 0.0);

  const StateCoefficient closed = *model.poisson_solution;
  const StateCoefficient perturbed = [closed](double t, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    closed(t, x, mu, y, out);
    out[0] += 0.1 * y[0] * y[0];
  };
  CHECK(residual_check(model, points, 1e-4, &perturbed) >= 1e-2);

  CHECK_THROWS_AS(residual_check(model, points, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(residual_check(model, points, -1e-3), std::invalid_argument);
  CHECK_THROWS_AS(residual_check(convolution_example(), points, 1e-4), std::invalid_argument);
}
