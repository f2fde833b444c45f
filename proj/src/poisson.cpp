#include "mvavg/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mvavg/parallel.hpp"
#include "mvavg/solvers.hpp"

namespace mvavg {

double minimum_phi_horizon(double beta, double tolerance) { return (2.0 / beta) * std::log(1.0 / tolerance); }

PhiEstimate estimate_phi(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu, ConstVec y,
                         const PhiConfig& config, const NoiseStream& stream, ConstVec bbar) {
  model.validate();
  const auto& d = model.dims;
  if (bbar.empty()) throw std::invalid_argument("estimate_phi: an averaged drift value is required");
  if (bbar.size() != d.n || x.size() != d.n || y.size() != d.m)
    throw std::invalid_argument("estimate_phi: argument dimensions do not match the model");
  if (config.n_traj < 2) throw std::invalid_argument("estimate_phi: need at least two trajectories");
  if (!(config.tolerance > 0.0 && config.tolerance < 1.0))
    throw std::invalid_argument("estimate_phi: tolerance must lie in (0, 1)");
  if (!(config.s_max > 0.0) || !(config.h_frozen > 0.0))
    throw std::invalid_argument("estimate_phi: s_max and h_frozen must be positive");
  // The truncation horizon is rounded up to the frozen grid.
  const auto steps = static_cast<std::size_t>(std::ceil(config.s_max / config.h_frozen - 1e-9));
  const double s_max = static_cast<double>(steps) * config.h_frozen;

  // Per-trajectory integrals, reduced in index order afterwards.
  std::vector<double> integrals(config.n_traj * d.n);
  parallel_for(config.n_traj, config.workers, [&](std::size_t j) {
    FrozenStepper stepper(model, t, x, mu, config.h_frozen, stream,
                          {config.replicate, static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(steps)});
    std::vector<double> state(y.begin(), y.end()), b(d.n), acc(d.n, 0.0);
    for (std::size_t k = 0; k <= steps; ++k) {
      if (k > 0) stepper.advance(state, k - 1);
      model.slow_drift(t, x, mu, state, b);
      const double w = (k == 0 || k == steps) ? 0.5 : 1.0;
      for (std::size_t c = 0; c < d.n; ++c) acc[c] += w * (b[c] - bbar[c]);
    }
    for (std::size_t c = 0; c < d.n; ++c) integrals[j * d.n + c] = acc[c] * config.h_frozen;
  });

  PhiEstimate est;
  est.s_max = s_max;
  est.n_traj = config.n_traj;
  est.value.assign(d.n, 0.0);
  est.standard_error.assign(d.n, 0.0);
  const double n = static_cast<double>(config.n_traj);
  for (std::size_t c = 0; c < d.n; ++c) {
    double sum = 0.0;
    for (std::size_t j = 0; j < config.n_traj; ++j) sum += integrals[j * d.n + c];
    const double mean = sum / n;
    double var = 0.0;
    for (std::size_t j = 0; j < config.n_traj; ++j) {
      const double dev = integrals[j * d.n + c] - mean;
      var += dev * dev;
    }
    var /= (n - 1.0);
    est.value[c] = mean;
    est.standard_error[c] = std::sqrt(var / n);
  }

  std::vector<double> b0(d.n);
  model.slow_drift(t, x, mu, y, b0);
  double gap = 0.0;
  for (std::size_t c = 0; c < d.n; ++c) gap += (b0[c] - bbar[c]) * (b0[c] - bbar[c]);
  est.tail_bound = std::sqrt(gap) * std::exp(-model.beta * s_max / 2.0) * (2.0 / model.beta);
  est.tail_warning = s_max < minimum_phi_horizon(model.beta, config.tolerance) * (1.0 - 1e-12);
  return est;
}

double residual_check(const CoefficientSet& model, std::span<const ResidualPoint> points, double fd_step,
                      const StateCoefficient* phi) {
  model.validate();
  if (!(fd_step > 0.0)) throw std::invalid_argument("residual_check: fd_step must be positive");
  if (phi == nullptr) {
    if (!model.poisson_solution)
      throw std::invalid_argument("residual_check: model '" + model.id + "' has no closed-form Poisson solution");
    phi = &*model.poisson_solution;
  }
  if (!model.averaged_drift)
    throw std::invalid_argument("residual_check: model '" + model.id + "' has no closed-form averaged drift");
  const auto& d = model.dims;
  const std::size_t n = d.n, m = d.m;
  const double h = fd_step;

  double worst = 0.0;
  std::vector<double> f(m), g(m * d.d2), b(n), bbar(n), phi0(n), plus(n), minus(n), pp(n), pm(n), mp(n), mm(n);
  std::vector<double> generator(n), hs(m);
  for (const auto& pt : points) {
    if (pt.x.size() != n || pt.y.size() != m) throw std::invalid_argument("residual_check: bad point dimension");
    const auto mu = pt.mu.view(&model.measure_features);
    model.fast_drift(pt.t, pt.x, mu, pt.y, f);
    model.fast_diffusion(pt.t, pt.x, mu, pt.y, g);
    model.slow_drift(pt.t, pt.x, mu, pt.y, b);
    (*model.averaged_drift)(pt.t, pt.x, mu, bbar);
    (*phi)(pt.t, pt.x, mu, pt.y, phi0);

    std::vector<double> yv = pt.y;
    auto eval = [&](std::vector<double>& out) { (*phi)(pt.t, pt.x, mu, yv, out); };
    std::fill(generator.begin(), generator.end(), 0.0);
    // Per-coordinate steps snapped so that y +- h is exact in floating point.
    for (std::size_t i = 0; i < m; ++i) {
      volatile double shifted = pt.y[i] + h;
      hs[i] = shifted - pt.y[i];
    }
    for (std::size_t i = 0; i < m; ++i) {
      const double yi = pt.y[i];
      const double hi = hs[i];
      yv[i] = yi + hi;
      eval(plus);
      yv[i] = yi - hi;
      eval(minus);
      yv[i] = yi;
      double gg_ii = 0.0;
      for (std::size_t r = 0; r < d.d2; ++r) gg_ii += g[i * d.d2 + r] * g[i * d.d2 + r];
      for (std::size_t k = 0; k < n; ++k) {
        const double first = (plus[k] - minus[k]) / (2.0 * hi);
        const double second = ((plus[k] - phi0[k]) - (phi0[k] - minus[k])) / (hi * hi);
        generator[k] += f[i] * first + 0.5 * gg_ii * second;
      }
      for (std::size_t j = i + 1; j < m; ++j) {
        double gg_ij = 0.0;
        for (std::size_t r = 0; r < d.d2; ++r) gg_ij += g[i * d.d2 + r] * g[j * d.d2 + r];
        const double yj = pt.y[j];
        const double hj = hs[j];
        yv[i] = yi + hi, yv[j] = yj + hj, eval(pp);
        yv[i] = yi + hi, yv[j] = yj - hj, eval(pm);
        yv[i] = yi - hi, yv[j] = yj + hj, eval(mp);
        yv[i] = yi - hi, yv[j] = yj - hj, eval(mm);
        yv[i] = yi, yv[j] = yj;
        // Off-diagonal terms appear twice in the trace.
        for (std::size_t k = 0; k < n; ++k)
          generator[k] += gg_ij * ((pp[k] - pm[k]) - (mp[k] - mm[k])) / (4.0 * hi * hj);
      }
    }
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(generator[k] + b[k] - bbar[k]));
  }
  return worst;
}

}  // namespace mvavg
