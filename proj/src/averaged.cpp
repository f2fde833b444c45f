#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mvavg/errors.hpp"
#include "mvavg/solvers.hpp"

namespace mvavg {

AveragedEnsemble::AveragedEnsemble(const CoefficientSet& model, std::size_t particles, ConstVec x0,
                                   const NoiseStream& stream, std::uint32_t replicate, std::uint32_t grid_tag,
                                   double fine_step, std::size_t fine_per_step, AveragedDriftConfig drift)
    : model_(model),
      particles_(particles),
      stream_(stream),
      replicate_(replicate),
      grid_tag_(grid_tag),
      fine_step_(fine_step),
      fine_per_step_(fine_per_step),
      drift_(std::move(drift)) {
  model.validate();
  const auto& d = model.dims;
  if (particles == 0) throw std::invalid_argument("AveragedEnsemble: need at least one particle");
  if (x0.size() != d.n) throw std::invalid_argument("AveragedEnsemble: initial state has wrong dimension");
  if (!(fine_step > 0.0) || fine_per_step == 0)
    throw std::invalid_argument("AveragedEnsemble: fine step and stride must be positive");
  if (drift_.source == DriftSource::Analytic && !model.averaged_drift)
    throw std::invalid_argument("AveragedEnsemble: model '" + model.id +
                                "' has no closed-form averaged drift; use the ergodic estimate");
  if (drift_.source == DriftSource::ErgodicEstimate && !(drift_.quantum > 0.0))
    throw std::invalid_argument("AveragedEnsemble: cache quantum must be positive");
  x_.resize(particles * d.n);
  for (std::size_t i = 0; i < particles; ++i)
    std::copy(x0.begin(), x0.end(), x_.begin() + static_cast<std::ptrdiff_t>(i * d.n));
  x_next_.resize(x_.size());
  bbar_.resize(d.n);
  sigma_.resize(d.n * d.d1);
  dw_.resize(d.d1);
}

void AveragedEnsemble::averaged_drift(double t, ConstVec x, const MeasureView& mu, MutVec out) {
  if (drift_.source == DriftSource::Analytic) {
    (*model_.averaged_drift)(t, x, mu, out);
    return;
  }
  const double q = drift_.quantum;
  std::vector<long long> key;
  key.reserve(x.size() + mu.dim());
  for (double v : x) key.push_back(std::llround(v / q));
  for (double v : mu.mean()) key.push_back(std::llround(v / q));
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    std::vector<double> xq(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) xq[k] = static_cast<double>(key[k]) * q;
    // All cells in one step share the frozen noise path.
    const FrozenKey frozen{replicate_, static_cast<std::uint32_t>(step_index_), grid_tag_};
    it = cache_.emplace(std::move(key), estimate_bbar(model_, t, xq, mu, drift_.sampling, stream_, frozen)).first;
    ++drift_evaluations_;
    for (double se : it->second.standard_error) {
      last_step_max_se_ = std::max(last_step_max_se_, se);
      se_sum_ += se;
      ++se_count_;
    }
  }
  std::copy(it->second.value.begin(), it->second.value.end(), out.begin());
}

void AveragedEnsemble::step() {
  const auto& d = model_.dims;
  const double h = coarse_step();
  const double t = time_;
  const EmpiricalMeasure mu(x_, d.n, &model_.measure_features);
  cache_.clear();
  last_step_max_se_ = 0.0;
  se_sum_ = 0.0;
  se_count_ = 0;
  const std::uint64_t first = step_index_ * fine_per_step_;
  NoiseKey key{NoiseRole::Slow, grid_tag_, replicate_, 0, 0, 0};
  for (std::size_t i = 0; i < particles_; ++i) {
    const ConstVec xi = ConstVec(x_).subspan(i * d.n, d.n);
    averaged_drift(t, xi, mu, bbar_);
    model_.slow_diffusion(t, xi, mu, sigma_);
    key.particle = static_cast<std::uint32_t>(i);
    stream_.aggregate_increments(key, fine_step_, first, fine_per_step_, dw_);
    for (std::size_t k = 0; k < d.n; ++k) {
      double v = xi[k] + bbar_[k] * h;
      for (std::size_t j = 0; j < d.d1; ++j) v += sigma_[k * d.d1 + j] * dw_[j];
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "step_averaged: non-finite state for particle " << i << " at t = " << t + h;
        throw NonFiniteStateError(os.str(), i, t + h);
      }
      x_next_[i * d.n + k] = v;
    }
  }
  last_step_mean_se_ = se_count_ == 0 ? 0.0 : se_sum_ / static_cast<double>(se_count_);
  x_.swap(x_next_);
  ++step_index_;
  time_ = static_cast<double>(step_index_) * h;
}

ParticleCloud AveragedEnsemble::x_cloud() const { return ParticleCloud(particles_, model_.dims.n, x_); }

AveragedTrajectory simulate_averaged(const CoefficientSet& model, const TimeGrid& grid,
                                     std::size_t fine_per_step, std::size_t particles, std::uint32_t replicate,
                                     const NoiseStream& stream, ConstVec x0, const AveragedDriftConfig& drift) {
  grid.validate();
  const std::size_t steps = grid.steps();
  const std::size_t fine_steps = steps * fine_per_step;
  if (fine_steps > kMaxGridTag) throw std::invalid_argument("simulate_averaged: too many fine steps");
  const double fine_step = grid.step / static_cast<double>(fine_per_step);
  AveragedEnsemble ens(model, particles, x0, stream, replicate, static_cast<std::uint32_t>(fine_steps),
                       fine_step, fine_per_step, drift);
  AveragedTrajectory traj;
  traj.checkpoints.push_back({0, 0.0, ens.x_cloud(), ParticleCloud()});
  for (std::size_t k = 1; k <= steps; ++k) {
    ens.step();
    traj.step_se.push_back(ens.last_step_mean_se());
    if (k % grid.checkpoint_stride == 0) traj.checkpoints.push_back({k, grid.time(k), ens.x_cloud(), ParticleCloud()});
  }
  return traj;
}

}  // namespace mvavg
