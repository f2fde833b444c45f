#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mvavg/solvers.hpp"

namespace mvavg {

double AuxiliaryTrajectory::sup_y_gap() const {
  return y_gap.empty() ? 0.0 : *std::max_element(y_gap.begin(), y_gap.end());
}

double AuxiliaryTrajectory::sup_x_gap() const {
  return x_gap.empty() ? 0.0 : *std::max_element(x_gap.begin(), x_gap.end());
}

namespace {

struct AuxiliaryState {
  std::size_t block = 0;            // fine steps per delta
  std::vector<double> x_hat, y_hat;
  std::vector<double> frozen_x;     // X at the current block start
  double frozen_t = 0.0;
};

double mean_square_gap(ConstVec a, ConstVec b, std::size_t particles) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(particles);
}

}  // namespace

std::vector<AuxiliaryTrajectory> simulate_auxiliary(const CoefficientSet& model, double epsilon,
                                                    std::span<const double> deltas, const TimeGrid& grid,
                                                    std::size_t particles, std::uint32_t replicate,
                                                    const NoiseStream& stream, const InitialState& init) {
  grid.validate();
  const std::size_t steps = grid.steps();
  const auto& d = model.dims;
  const double h = grid.step;
  const double bound = slowfast_step_bound(epsilon, model.beta);
  if (h > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "simulate_auxiliary: step " << h << " violates the stability bound " << bound;
    throw std::invalid_argument(os.str());
  }

  std::vector<AuxiliaryState> states(deltas.size());
  std::vector<AuxiliaryTrajectory> out(deltas.size());
  for (std::size_t a = 0; a < deltas.size(); ++a) {
    const double ratio = deltas[a] / h;
    const double rounded = std::round(ratio);
    if (!(deltas[a] > 0.0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
      std::ostringstream os;
      os << "simulate_auxiliary: delta " << deltas[a] << " is not a positive multiple of the step " << h;
      throw std::invalid_argument(os.str());
    }
    states[a].block = static_cast<std::size_t>(rounded);
    out[a].delta = deltas[a];
    out[a].y_gap.reserve(steps + 1);
    out[a].x_gap.reserve(steps + 1);
  }

  SlowFastEnsemble ens(model, epsilon, particles, init, stream, replicate, static_cast<std::uint32_t>(steps));
  for (auto& s : states) {
    s.x_hat.assign(ens.x().begin(), ens.x().end());
    s.y_hat.assign(ens.y().begin(), ens.y().end());
  }

  std::vector<double> dw1(particles * d.d1), dw2(particles * d.d2);
  std::vector<double> b(d.n), sigma(d.n * d.d1), f(d.m), g(d.m * d.d2);
  const double inv_eps = 1.0 / epsilon;
  const double inv_sqrt_eps = 1.0 / std::sqrt(epsilon);

  auto record = [&](std::size_t k) {
    for (std::size_t a = 0; a < states.size(); ++a) {
      out[a].y_gap.push_back(mean_square_gap(ens.y(), states[a].y_hat, particles));
      out[a].x_gap.push_back(mean_square_gap(ens.x(), states[a].x_hat, particles));
      if (k % grid.checkpoint_stride == 0) {
        out[a].checkpoints.push_back({k, grid.time(k), ParticleCloud(particles, d.n, states[a].x_hat),
                                      ParticleCloud(particles, d.m, states[a].y_hat)});
      }
    }
  };
  record(0);

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = grid.time(k);
    ens.draw_increments(h, dw1, dw2);
    const EmpiricalMeasure mu_now = ens.measure();
    const ConstVec x_now = ens.x();

    for (auto& s : states) {
      if (k % s.block == 0) {
        s.frozen_x.assign(x_now.begin(), x_now.end());
        s.frozen_t = t;
      }
      const EmpiricalMeasure mu_frozen(s.frozen_x, d.n, &model.measure_features);
      for (std::size_t i = 0; i < particles; ++i) {
        const ConstVec xf = ConstVec(s.frozen_x).subspan(i * d.n, d.n);
        const MutVec yh = MutVec(s.y_hat).subspan(i * d.m, d.m);
        const MutVec xh = MutVec(s.x_hat).subspan(i * d.n, d.n);
        model.slow_drift(s.frozen_t, xf, mu_frozen, yh, b);
        model.slow_diffusion(t, x_now.subspan(i * d.n, d.n), mu_now, sigma);
        model.fast_drift(s.frozen_t, xf, mu_frozen, yh, f);
        model.fast_diffusion(s.frozen_t, xf, mu_frozen, yh, g);
        for (std::size_t c = 0; c < d.n; ++c) {
          double v = xh[c] + b[c] * h;
          for (std::size_t j = 0; j < d.d1; ++j) v += sigma[c * d.d1 + j] * dw1[i * d.d1 + j];
          xh[c] = v;
        }
        for (std::size_t c = 0; c < d.m; ++c) {
          double noise = 0.0;
          for (std::size_t j = 0; j < d.d2; ++j) noise += g[c * d.d2 + j] * dw2[i * d.d2 + j];
          double v = yh[c] + inv_eps * f[c] * h;
          v += inv_sqrt_eps * noise;
          yh[c] = v;
        }
      }
    }
    ens.step_with_increments(h, dw1, dw2);
    record(k + 1);
  }
  return out;
}

AuxiliaryTrajectory simulate_auxiliary(const CoefficientSet& model, double epsilon, double delta,
                                       const TimeGrid& grid, std::size_t particles, std::uint32_t replicate,
                                       const NoiseStream& stream, const InitialState& init) {
  const double deltas[] = {delta};
  return std::move(simulate_auxiliary(model, epsilon, deltas, grid, particles, replicate, stream, init)[0]);
}

}  // namespace mvavg
