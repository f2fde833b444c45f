#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "mvavg/measure.hpp"
#include "mvavg/model.hpp"
#include "mvavg/noise.hpp"

namespace mvavg {

/// Uniform grid on [0, horizon] with checkpoints every checkpoint_stride steps.
struct TimeGrid {
  double horizon = 1.0;
  double step = 1.0 / 64;
  std::size_t checkpoint_stride = 1;

  /// horizon / step; throws unless it is a positive integer.
  std::size_t steps() const;
  void validate() const;
  double time(std::size_t k) const { return static_cast<double>(k) * step; }
};

/// Deterministic initial point broadcast to every particle.
struct InitialState {
  std::vector<double> x;
  std::vector<double> y;
};

struct MomentRow {
  double t = 0.0;
  double m2_x = 0.0;
  double m4_x = 0.0;
  double m2_y = 0.0;
  double m4_y = 0.0;
};

/// Ensemble snapshot. y is empty for ensembles without a fast component.
struct CloudCheckpoint {
  std::size_t step = 0;
  double t = 0.0;
  ParticleCloud x;
  ParticleCloud y;
};

/// Largest admissible step for the 1/eps-stiff fast drift.
inline double slowfast_step_bound(double epsilon, double beta) { return 0.5 * epsilon / beta; }
/// Largest admissible step for the frozen equation.
inline double frozen_step_bound(double beta) { return 0.5 / beta; }

/// (E|X|^2, E|X|^4, E|Y|^2, E|Y|^4) of row-major particle arrays.
MomentRow ensemble_moments(double t, ConstVec x, std::size_t n, ConstVec y, std::size_t m);

// ---------------------------------------------------------------------------
// Slow-fast particle system

/// N interacting particles (x_i, y_i) advanced by Euler-Maruyama. Within a
/// step every particle sees the empirical law of the pre-step X cloud.
class SlowFastEnsemble {
 public:
  SlowFastEnsemble(const CoefficientSet& model, double epsilon, std::size_t particles,
                   const InitialState& init, const NoiseStream& stream, std::uint32_t replicate,
                   std::uint32_t grid_tag);

  /// One step with Brownian increments drawn at the current step index.
  void step(double h);

  /// Increments for the current step index, N x d1 and N x d2 row-major,
  /// pre-scaled by sqrt(h).
  void draw_increments(double h, MutVec dw1, MutVec dw2) const;

  /// One step with caller-supplied increments.
  void step_with_increments(double h, ConstVec dw1, ConstVec dw2);

  double time() const noexcept { return time_; }
  std::uint64_t step_index() const noexcept { return step_index_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t size() const noexcept { return particles_; }
  const CoefficientSet& model() const noexcept { return model_; }

  ConstVec x() const noexcept { return x_; }
  ConstVec y() const noexcept { return y_; }
  ParticleCloud x_cloud() const;
  ParticleCloud y_cloud() const;
  MomentRow moments() const;
  /// Empirical law of the current X cloud with the model's features.
  EmpiricalMeasure measure() const { return EmpiricalMeasure(x_, model_.dims.n, &model_.measure_features); }

 private:
  const CoefficientSet& model_;
  double epsilon_;
  std::size_t particles_;
  const NoiseStream& stream_;
  std::uint32_t replicate_;
  std::uint32_t grid_tag_;
  double time_ = 0.0;
  std::uint64_t step_index_ = 0;
  std::vector<double> x_, y_, x_next_, y_next_;
  std::vector<double> dw1_, dw2_;
  std::vector<double> b_, sigma_, f_, g_;
};

struct SlowFastTrajectory {
  std::vector<CloudCheckpoint> checkpoints;  // t = 0 and every checkpoint_stride steps
  std::vector<MomentRow> moments;            // at the same times
};

using StepObserver = std::function<void(const SlowFastEnsemble&)>;

/// Integrates the slow-fast system over grid. The noise grid tag is
/// grid.steps(). The observer, if set, runs after every step.
SlowFastTrajectory simulate_slowfast(const CoefficientSet& model, double epsilon, const TimeGrid& grid,
                                     std::size_t particles, std::uint32_t replicate,
                                     const NoiseStream& stream, const InitialState& init,
                                     const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Khasminskii auxiliary process

struct AuxiliaryTrajectory {
  double delta = 0.0;
  std::vector<CloudCheckpoint> checkpoints;  // (X-hat, Y-hat)
  std::vector<double> y_gap;  // ensemble mean |Y - Y-hat|^2 at every grid node
  std::vector<double> x_gap;  // ensemble mean |X - X-hat|^2 at every grid node

  double sup_y_gap() const;
  double sup_x_gap() const;
};

/// Co-simulates the slow-fast system with one auxiliary process per delta.
/// On blocks [k delta, (k+1) delta) the auxiliary coefficients are frozen at
/// (k delta, X_{k delta}, L(X_{k delta})); the auxiliary pair consumes the
/// same W1 and W2 increments as the slow-fast pair and X-hat keeps the
/// original sigma(s, X_s, L(X_s)) dW1 term. Each delta must be a multiple
/// of grid.step.
std::vector<AuxiliaryTrajectory> simulate_auxiliary(const CoefficientSet& model, double epsilon,
                                                    std::span<const double> deltas, const TimeGrid& grid,
                                                    std::size_t particles, std::uint32_t replicate,
                                                    const NoiseStream& stream, const InitialState& init);

AuxiliaryTrajectory simulate_auxiliary(const CoefficientSet& model, double epsilon, double delta,
                                       const TimeGrid& grid, std::size_t particles, std::uint32_t replicate,
                                       const NoiseStream& stream, const InitialState& init);

// ---------------------------------------------------------------------------
// Frozen equation dY = f(t,x,mu,Y) ds + g(t,x,mu,Y) dW

/// Addresses a frozen trajectory inside the FrozenNoise key space.
struct FrozenKey {
  std::uint32_t replicate = 0;
  std::uint32_t path = 0;
  std::uint32_t grid = 0;
};

class FrozenStepper {
 public:
  FrozenStepper(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu, double h,
                const NoiseStream& stream, FrozenKey key);

  /// y <- y + f h + g dW at the given step index.
  void advance(MutVec y, std::uint64_t step_index);
  double step() const noexcept { return h_; }

 private:
  const CoefficientSet& model_;
  double t_;
  std::vector<double> x_;
  const MeasureView& mu_;
  double h_;
  const NoiseStream& stream_;
  FrozenKey key_;
  std::vector<double> f_, g_, dw_;
};

struct FrozenPath {
  double step = 0.0;
  std::size_t dim = 0;
  std::vector<double> states;  // (steps + 1) x dim

  std::size_t nodes() const { return dim == 0 ? 0 : states.size() / dim; }
  ConstVec at(std::size_t k) const { return ConstVec(states).subspan(k * dim, dim); }
};

FrozenPath simulate_frozen(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                           ConstVec y, double s_horizon, double h_frozen, const NoiseStream& stream,
                           FrozenKey key = {});

inline constexpr std::size_t kInfiniteThin = std::numeric_limits<std::size_t>::max();

struct InvariantSampling {
  double burn_in = 0.0;          // in frozen time units
  std::size_t n_samples = 100;
  std::size_t thin_steps = 1;    // kInfiniteThin keeps a single sample
  double h_frozen = 0.01;
};

/// Minimum burn-in: (10 / beta) ln 10.
double minimum_burn_in(double beta);

/// Burn-in (10/beta) ln 10 and thinning (5/beta)/h_frozen steps.
InvariantSampling default_sampling(double beta, double h_frozen, std::size_t n_samples);

/// Thinned samples from one long frozen trajectory after burn-in.
ParticleCloud sample_invariant(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                               const InvariantSampling& sampling, const NoiseStream& stream,
                               FrozenKey key = {}, ConstVec y_start = {});

struct BbarEstimate {
  std::vector<double> value;
  std::vector<double> standard_error;  // batch means
  std::size_t n_samples = 0;
};

/// Ergodic average of b(t,x,mu,Y) over sample_invariant draws.
BbarEstimate estimate_bbar(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                           const InvariantSampling& sampling, const NoiseStream& stream,
                           FrozenKey key = {}, ConstVec y_start = {});

/// Batch-means standard error of the mean of a correlated series.
double batch_means_se(std::span<const double> series, std::size_t batches = 20);

// ---------------------------------------------------------------------------
// Averaged equation dXbar = bbar(t,Xbar,L(Xbar)) dt + sigma dW1

enum class DriftSource { Analytic, ErgodicEstimate };

struct AveragedDriftConfig {
  DriftSource source = DriftSource::Analytic;
  InvariantSampling sampling;   // used by ErgodicEstimate
  double quantum = 1e-3;        // cache grid for x and mean(mu)
};

/// Averaged particle system on a coarse grid whose steps are unions of
/// fine_per_step fine steps; slow increments are aggregated from the fine
/// grid so the path matches the slow-fast run with the same grid tag.
class AveragedEnsemble {
 public:
  AveragedEnsemble(const CoefficientSet& model, std::size_t particles, ConstVec x0,
                   const NoiseStream& stream, std::uint32_t replicate, std::uint32_t grid_tag,
                   double fine_step, std::size_t fine_per_step, AveragedDriftConfig drift);

  void step();

  double time() const noexcept { return time_; }
  std::uint64_t step_index() const noexcept { return step_index_; }
  double coarse_step() const noexcept { return fine_step_ * static_cast<double>(fine_per_step_); }
  ConstVec x() const noexcept { return x_; }
  ParticleCloud x_cloud() const;
  std::size_t drift_evaluations() const noexcept { return drift_evaluations_; }
  /// Standard errors of the ergodic drift estimates used in the last step.
  double last_step_max_se() const noexcept { return last_step_max_se_; }
  double last_step_mean_se() const noexcept { return last_step_mean_se_; }

 private:
  void averaged_drift(double t, ConstVec x, const MeasureView& mu, MutVec out);

  const CoefficientSet& model_;
  std::size_t particles_;
  const NoiseStream& stream_;
  std::uint32_t replicate_;
  std::uint32_t grid_tag_;
  double fine_step_;
  std::size_t fine_per_step_;
  AveragedDriftConfig drift_;
  double time_ = 0.0;
  std::uint64_t step_index_ = 0;
  std::vector<double> x_, x_next_, bbar_, sigma_, dw_;
  std::map<std::vector<long long>, BbarEstimate> cache_;
  std::size_t drift_evaluations_ = 0;
  double last_step_max_se_ = 0.0;
  double last_step_mean_se_ = 0.0;
  double se_sum_ = 0.0;
  std::size_t se_count_ = 0;
};

struct AveragedTrajectory {
  std::vector<CloudCheckpoint> checkpoints;
  std::vector<double> step_se;  // mean ergodic-drift SE per step (zero for Analytic)
};

/// grid is the coarse grid; grid.steps() * fine_per_step fine steps form the
/// noise grid tag.
AveragedTrajectory simulate_averaged(const CoefficientSet& model, const TimeGrid& grid,
                                     std::size_t fine_per_step, std::size_t particles,
                                     std::uint32_t replicate, const NoiseStream& stream, ConstVec x0,
                                     const AveragedDriftConfig& drift = {});

}  // namespace mvavg
