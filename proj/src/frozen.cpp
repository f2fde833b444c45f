#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mvavg/errors.hpp"
#include "mvavg/solvers.hpp"

namespace mvavg {

FrozenStepper::FrozenStepper(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                             double h, const NoiseStream& stream, FrozenKey key)
    : model_(model),
      t_(t),
      x_(x.begin(), x.end()),
      mu_(mu),
      h_(h),
      stream_(stream),
      key_(key),
      f_(model.dims.m),
      g_(model.dims.m * model.dims.d2),
      dw_(model.dims.d2) {
  model.validate();
  if (x.size() != model.dims.n) throw std::invalid_argument("frozen equation: x has wrong dimension");
  const double bound = frozen_step_bound(model.beta);
  if (!(h > 0.0) || h > bound * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "frozen equation: step " << h << " violates the stability bound h <= 0.5/beta = " << bound;
    throw StabilityError(os.str(), bound);
  }
}

void FrozenStepper::advance(MutVec y, std::uint64_t step_index) {
  const auto& d = model_.dims;
  model_.fast_drift(t_, x_, mu_, y, f_);
  model_.fast_diffusion(t_, x_, mu_, y, g_);
  stream_.gaussian_increments({NoiseRole::Frozen, key_.grid, key_.replicate, key_.path, 0, step_index}, h_,
                              dw_);
  for (std::size_t k = 0; k < d.m; ++k) {
    double v = y[k] + f_[k] * h_;
    for (std::size_t j = 0; j < d.d2; ++j) v += g_[k * d.d2 + j] * dw_[j];
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "frozen equation: non-finite state at step " << step_index;
      throw NonFiniteStateError(os.str(), key_.path, static_cast<double>(step_index + 1) * h_);
    }
    y[k] = v;
  }
}

FrozenPath simulate_frozen(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                           ConstVec y, double s_horizon, double h_frozen, const NoiseStream& stream,
                           FrozenKey key) {
  FrozenStepper stepper(model, t, x, mu, h_frozen, stream, key);
  if (y.size() != model.dims.m) throw std::invalid_argument("simulate_frozen: y has wrong dimension");
  const std::size_t steps = TimeGrid{s_horizon, h_frozen, 1}.steps();
  FrozenPath path;
  path.step = h_frozen;
  path.dim = model.dims.m;
  path.states.reserve((steps + 1) * path.dim);
  std::vector<double> state(y.begin(), y.end());
  path.states.insert(path.states.end(), state.begin(), state.end());
  for (std::size_t k = 0; k < steps; ++k) {
    stepper.advance(state, k);
    path.states.insert(path.states.end(), state.begin(), state.end());
  }
  return path;
}

double minimum_burn_in(double beta) { return (10.0 / beta) * std::numbers::ln10; }

InvariantSampling default_sampling(double beta, double h_frozen, std::size_t n_samples) {
  InvariantSampling s;
  s.burn_in = minimum_burn_in(beta);
  s.n_samples = n_samples;
  s.h_frozen = h_frozen;
  s.thin_steps = static_cast<std::size_t>(std::ceil((5.0 / beta) / h_frozen));
  return s;
}

namespace {

void check_sampling(const CoefficientSet& model, const InvariantSampling& s) {
  if (s.burn_in < minimum_burn_in(model.beta) * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << "invariant sampling: burn-in " << s.burn_in << " is below (10/beta) ln 10 = "
       << minimum_burn_in(model.beta);
    throw std::invalid_argument(os.str());
  }
  if (s.n_samples == 0) throw std::invalid_argument("invariant sampling: n_samples must be >= 1");
  if (s.thin_steps == 0) throw std::invalid_argument("invariant sampling: thinning must be >= 1 step");
}

}  // namespace

ParticleCloud sample_invariant(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                               const InvariantSampling& sampling, const NoiseStream& stream, FrozenKey key,
                               ConstVec y_start) {
  check_sampling(model, sampling);
  FrozenStepper stepper(model, t, x, mu, sampling.h_frozen, stream, key);
  const std::size_t m = model.dims.m;
  std::vector<double> state(m, 0.0);
  if (!y_start.empty()) {
    if (y_start.size() != m) throw std::invalid_argument("sample_invariant: y_start has wrong dimension");
    state.assign(y_start.begin(), y_start.end());
  }
  const auto burn_steps = static_cast<std::uint64_t>(std::ceil(sampling.burn_in / sampling.h_frozen - 1e-9));
  const bool single = sampling.thin_steps == kInfiniteThin;
  const std::size_t count = single ? 1 : sampling.n_samples;
  std::uint64_t k = 0;
  for (; k < burn_steps; ++k) stepper.advance(state, k);
  std::vector<double> samples;
  samples.reserve(count * m);
  for (std::size_t s = 0; s < count; ++s) {
    if (s > 0)
      for (std::size_t j = 0; j < sampling.thin_steps; ++j, ++k) stepper.advance(state, k);
    samples.insert(samples.end(), state.begin(), state.end());
  }
  return ParticleCloud(count, m, std::move(samples));
}

double batch_means_se(std::span<const double> series, std::size_t batches) {
  const std::size_t n = series.size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  const std::size_t b = std::min(batches, n);
  const std::size_t size = n / b;
  std::vector<double> means(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < size; ++j) means[i] += series[i * size + j];
    means[i] /= static_cast<double>(size);
  }
  double mean = 0.0;
  for (double v : means) mean += v;
  mean /= static_cast<double>(b);
  double var = 0.0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= static_cast<double>(b - 1);
  return std::sqrt(var / static_cast<double>(b));
}

BbarEstimate estimate_bbar(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                           const InvariantSampling& sampling, const NoiseStream& stream, FrozenKey key,
                           ConstVec y_start) {
  const ParticleCloud samples = sample_invariant(model, t, x, mu, sampling, stream, key, y_start);
  const std::size_t n = model.dims.n;
  const std::size_t count = samples.size();
  std::vector<double> values(count * n);
  for (std::size_t s = 0; s < count; ++s)
    model.slow_drift(t, x, mu, samples.row(s), MutVec(values).subspan(s * n, n));
  BbarEstimate est;
  est.n_samples = count;
  est.value.assign(n, 0.0);
  est.standard_error.assign(n, 0.0);
  std::vector<double> series(count);
  for (std::size_t c = 0; c < n; ++c) {
    double sum = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      series[s] = values[s * n + c];
      sum += series[s];
    }
    est.value[c] = sum / static_cast<double>(count);
    bool constant = true;
    for (double v : series) constant = constant && v == series[0];
    est.standard_error[c] = constant ? 0.0 : batch_means_se(series);
  }
  return est;
}

}  // namespace mvavg
