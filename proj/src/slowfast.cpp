#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mvavg/errors.hpp"
#include "mvavg/solvers.hpp"

namespace mvavg {

std::size_t TimeGrid::steps() const {
  if (!(horizon > 0.0) || !(step > 0.0))
    throw std::invalid_argument("TimeGrid: horizon and step must be positive");
  const double ratio = horizon / step;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded) {
    std::ostringstream os;
    os << "TimeGrid: horizon " << horizon << " is not an integer multiple of step " << step;
    throw std::invalid_argument(os.str());
  }
  return static_cast<std::size_t>(rounded);
}

void TimeGrid::validate() const {
  const std::size_t n = steps();
  if (checkpoint_stride == 0 || n % checkpoint_stride != 0)
    throw std::invalid_argument("TimeGrid: checkpoint stride must divide the number of steps");
}

MomentRow ensemble_moments(double t, ConstVec x, std::size_t n, ConstVec y, std::size_t m) {
  MomentRow row;
  row.t = t;
  auto accumulate = [](ConstVec v, std::size_t d, double& m2, double& m4) {
    if (d == 0 || v.empty()) return;
    const std::size_t count = v.size() / d;
    for (std::size_t i = 0; i < count; ++i) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) r2 += v[i * d + k] * v[i * d + k];
      m2 += r2;
      m4 += r2 * r2;
    }
    m2 /= static_cast<double>(count);
    m4 /= static_cast<double>(count);
  };
  accumulate(x, n, row.m2_x, row.m4_x);
  accumulate(y, m, row.m2_y, row.m4_y);
  return row;
}

SlowFastEnsemble::SlowFastEnsemble(const CoefficientSet& model, double epsilon, std::size_t particles,
                                   const InitialState& init, const NoiseStream& stream,
                                   std::uint32_t replicate, std::uint32_t grid_tag)
    : model_(model),
      epsilon_(epsilon),
      particles_(particles),
      stream_(stream),
      replicate_(replicate),
      grid_tag_(grid_tag) {
  model.validate();
  const auto& d = model.dims;
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("SlowFastEnsemble: epsilon must lie in (0, 1)");
  if (particles == 0) throw std::invalid_argument("SlowFastEnsemble: need at least one particle");
  if (init.x.size() != d.n || init.y.size() != d.m)
    throw std::invalid_argument("SlowFastEnsemble: initial state has wrong dimension");
  x_.resize(particles * d.n);
  y_.resize(particles * d.m);
  for (std::size_t i = 0; i < particles; ++i) {
    std::copy(init.x.begin(), init.x.end(), x_.begin() + static_cast<std::ptrdiff_t>(i * d.n));
    std::copy(init.y.begin(), init.y.end(), y_.begin() + static_cast<std::ptrdiff_t>(i * d.m));
  }
  x_next_.resize(x_.size());
  y_next_.resize(y_.size());
  dw1_.resize(particles * d.d1);
  dw2_.resize(particles * d.d2);
  b_.resize(d.n);
  sigma_.resize(d.n * d.d1);
  f_.resize(d.m);
  g_.resize(d.m * d.d2);
}

void SlowFastEnsemble::draw_increments(double h, MutVec dw1, MutVec dw2) const {
  const auto& d = model_.dims;
  NoiseKey slow{NoiseRole::Slow, grid_tag_, replicate_, 0, 0, step_index_};
  NoiseKey fast{NoiseRole::Fast, grid_tag_, replicate_, 0, 0, step_index_};
  for (std::size_t i = 0; i < particles_; ++i) {
    slow.particle = fast.particle = static_cast<std::uint32_t>(i);
    stream_.gaussian_increments(slow, h, dw1.subspan(i * d.d1, d.d1));
    stream_.gaussian_increments(fast, h, dw2.subspan(i * d.d2, d.d2));
  }
}

void SlowFastEnsemble::step(double h) {
  const double bound = slowfast_step_bound(epsilon_, model_.beta);
  if (!(h > 0.0) || h > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "step_slowfast: step " << h << " violates the stability bound h <= 0.5*eps/beta = " << bound;
    throw StabilityError(os.str(), bound);
  }
  draw_increments(h, dw1_, dw2_);
  step_with_increments(h, dw1_, dw2_);
}

void SlowFastEnsemble::step_with_increments(double h, ConstVec dw1, ConstVec dw2) {
  const auto& d = model_.dims;
  if (dw1.size() != particles_ * d.d1 || dw2.size() != particles_ * d.d2)
    throw std::invalid_argument("step_with_increments: increment arrays have wrong size");
  const EmpiricalMeasure mu(x_, d.n, &model_.measure_features);
  const double inv_eps = 1.0 / epsilon_;
  const double inv_sqrt_eps = 1.0 / std::sqrt(epsilon_);
  const double t = time_;
  for (std::size_t i = 0; i < particles_; ++i) {
    const ConstVec xi = ConstVec(x_).subspan(i * d.n, d.n);
    const ConstVec yi = ConstVec(y_).subspan(i * d.m, d.m);
    const ConstVec w1 = dw1.subspan(i * d.d1, d.d1);
    const ConstVec w2 = dw2.subspan(i * d.d2, d.d2);
    model_.slow_drift(t, xi, mu, yi, b_);
    model_.slow_diffusion(t, xi, mu, sigma_);
    model_.fast_drift(t, xi, mu, yi, f_);
    model_.fast_diffusion(t, xi, mu, yi, g_);
    bool finite = true;
    for (std::size_t k = 0; k < d.n; ++k) {
      double v = xi[k] + b_[k] * h;
      for (std::size_t j = 0; j < d.d1; ++j) v += sigma_[k * d.d1 + j] * w1[j];
      x_next_[i * d.n + k] = v;
      finite = finite && std::isfinite(v);
    }
    for (std::size_t k = 0; k < d.m; ++k) {
      double v = yi[k] + inv_eps * f_[k] * h;
      double noise = 0.0;
      for (std::size_t j = 0; j < d.d2; ++j) noise += g_[k * d.d2 + j] * w2[j];
      v += inv_sqrt_eps * noise;
      y_next_[i * d.m + k] = v;
      finite = finite && std::isfinite(v);
    }
    if (!finite) {
      std::ostringstream os;
      os << "step_slowfast: non-finite state for particle " << i << " at t = " << t + h;
      throw NonFiniteStateError(os.str(), i, t + h);
    }
  }
  x_.swap(x_next_);
  y_.swap(y_next_);
  ++step_index_;
  time_ = static_cast<double>(step_index_) * h;
}

ParticleCloud SlowFastEnsemble::x_cloud() const { return ParticleCloud(particles_, model_.dims.n, x_); }
ParticleCloud SlowFastEnsemble::y_cloud() const { return ParticleCloud(particles_, model_.dims.m, y_); }

MomentRow SlowFastEnsemble::moments() const {
  return ensemble_moments(time_, x_, model_.dims.n, y_, model_.dims.m);
}

SlowFastTrajectory simulate_slowfast(const CoefficientSet& model, double epsilon, const TimeGrid& grid,
                                     std::size_t particles, std::uint32_t replicate,
                                     const NoiseStream& stream, const InitialState& init,
                                     const StepObserver& observer) {
  grid.validate();
  const std::size_t steps = grid.steps();
  if (steps > kMaxGridTag) throw std::invalid_argument("simulate_slowfast: too many steps for the noise grid tag");
  const double bound = slowfast_step_bound(epsilon, model.beta);
  if (grid.step > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "simulate_slowfast: step " << grid.step << " violates the stability bound h <= 0.5*eps/beta = "
       << bound;
    throw StabilityError(os.str(), bound);
  }
  SlowFastEnsemble ens(model, epsilon, particles, init, stream, replicate, static_cast<std::uint32_t>(steps));
  SlowFastTrajectory traj;
  auto snapshot = [&](std::size_t k) {
    traj.checkpoints.push_back({k, grid.time(k), ens.x_cloud(), ens.y_cloud()});
    MomentRow row = ens.moments();
    row.t = grid.time(k);
    traj.moments.push_back(row);
  };
  snapshot(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    ens.step(grid.step);
    if (observer) observer(ens);
    if (k % grid.checkpoint_stride == 0) snapshot(k);
  }
  return traj;
}

}  // namespace mvavg
