#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvavg/measure.hpp"
#include "mvavg/model.hpp"
#include "mvavg/noise.hpp"
#include "mvavg/solvers.hpp"
#include "mvavg/stats.hpp"

namespace mvavg {

// ---------------------------------------------------------------------------
// Strong error between the slow-fast and averaged particle systems

struct StrongErrorConfig {
  double horizon = 1.0;
  double slow_step = 1.0 / 256;  // averaged-equation step and slow-fast target step
  std::size_t checkpoints = 64;  // over [0, horizon]
  std::size_t particles = 2000;
  std::size_t replicates = 32;
  InitialState init{{1.0}, {1.0}};
  AveragedDriftConfig drift;
  std::size_t fine_per_step = 0;  // 0: derived from the stability bound
  unsigned workers = 1;

  /// Throws std::invalid_argument listing every problem found.
  void validate(const Dimensions& dims) const;
};

/// ceil(slow_step / slowfast_step_bound(epsilon, beta)), at least 1.
std::size_t fine_steps_per_slow_step(double slow_step, double epsilon, double beta);

struct StrongErrorResult {
  double epsilon = 0.0;
  double fine_step = 0.0;
  std::size_t fine_per_step = 0;
  std::vector<double> times;       // checkpoint times
  ReplicateMatrix squared_error;   // particle mean of |X - Xbar|^2
  double error = 0.0;              // max over checkpoints of the replicate mean
  double standard_error = 0.0;     // across replicates at the maximising checkpoint
  std::size_t argmax = 0;
  std::vector<MomentRow> moments;  // slow-fast moments, replicate mean
  double max_m4_x = 0.0;
  double max_m4_y = 0.0;
};

/// Runs replicate pairs (slow-fast, averaged) driven by the same W1 path and
/// returns sup_t E|X^eps_t - Xbar_t|^2 on the checkpoint grid.
StrongErrorResult strong_error(const CoefficientSet& model, double epsilon, const StrongErrorConfig& config,
                               const NoiseStream& stream);

struct ConvergenceConfig {
  std::vector<double> epsilons{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512};
  StrongErrorConfig run;
  std::size_t bootstrap = 1000;

  void validate(const Dimensions& dims) const;
};

struct ConvergenceReport {
  std::string model_id;
  std::uint64_t seed = 0;
  ConvergenceConfig config;
  std::vector<double> epsilon_grid;
  std::vector<double> errors;
  std::vector<double> standard_errors;
  RateFit fit;
  std::vector<StrongErrorResult> runs;
  bool decreasing = false;         // every consecutive drop exceeds 3 combined SE
  double bound_constant = 0.0;     // error / eps^(2/3) at the largest eps
  bool bound_consistent = false;   // error <= bound_constant eps^(2/3) everywhere
};

ConvergenceReport run_convergence(const CoefficientSet& model, const ConvergenceConfig& config,
                                  const NoiseStream& stream);

/// err[k] - err[k+1] > factor * sqrt(se[k]^2 + se[k+1]^2) for every k.
bool strictly_decreasing(std::span<const double> errors, std::span<const double> standard_errors,
                         double factor = 3.0);

/// epsilon,error,se,n_particles,n_reps,seed
std::string convergence_csv(const ConvergenceReport& report);

// ---------------------------------------------------------------------------
// Diagnostics

struct MomentTableRow {
  double epsilon = 0.0;
  double max_m4_x = 0.0;  // max over checkpoints of the replicate-mean E|X|^4
  double max_m4_y = 0.0;
};

/// Fourth-moment table from slow-fast runs only.
std::vector<MomentTableRow> moment_table(const CoefficientSet& model, std::span<const double> epsilons,
                                         const StrongErrorConfig& config, const NoiseStream& stream);

/// max/min ratio of a column of the table.
double moment_spread(std::span<const MomentTableRow> table, bool slow);

struct HolderResult {
  double epsilon = 0.0;
  double t0 = 0.0;
  std::vector<double> lags;
  std::vector<double> increments;  // E|X_{t0+lag} - X_t0|^2
  std::vector<double> standard_errors;
  LineFit fit;                     // log increment vs log lag
};

/// Mean-square increments of X^eps after t0 for each lag. Lags must be
/// multiples of the fine step.
HolderResult holder_in_time(const CoefficientSet& model, double epsilon, double t0, std::span<const double> lags,
                            const StrongErrorConfig& config, const NoiseStream& stream);

struct DeltaSweepRow {
  double delta = 0.0;
  double err_y = 0.0;  // sup over nodes of E|Y - Yhat|^2
  double se_y = 0.0;
  double err_x = 0.0;  // sup over nodes of E|X - Xhat|^2
  double se_x = 0.0;
};

struct DeltaSweep {
  double epsilon = 0.0;
  double fine_step = 0.0;
  std::vector<DeltaSweepRow> rows;  // the requested deltas
  LineFit fit_y;
  LineFit fit_x;
  DeltaSweepRow two_thirds;         // delta = eps^(2/3) rounded to the fine grid
};

/// Auxiliary-process gaps for each delta at one epsilon. The fine step is the
/// largest step not above the stability bound that divides every delta.
DeltaSweep delta_sweep(const CoefficientSet& model, double epsilon, std::span<const double> deltas,
                       const StrongErrorConfig& config, const NoiseStream& stream);

struct ErgodicDecayConfig {
  double t = 0.0;
  std::vector<double> x{1.0};
  std::vector<double> mu_points{1.0};  // equal-weight atoms, dims.n per atom
  std::vector<double> y0{10.0};
  double horizon = 0.0;                // 0: 10 / (beta/2)
  double h_frozen = 0.01;
  std::size_t n_traj = 200000;
  std::size_t n_points = 51;           // output nodes including s = 0
  std::uint32_t replicate = 0;
  unsigned workers = 1;
};

struct DecayPoint {
  double s = 0.0;
  double deviation = 0.0;  // |E b(Y_s) - bbar|
  double se = 0.0;
};

struct ErgodicDecay {
  std::vector<DecayPoint> points;
  double rate = 0.0;             // fitted exponential rate
  double rate_se = 0.0;
  std::size_t fitted_points = 0; // nodes with deviation > 3 se
  double decay_ratio = 0.0;      // deviation(0) / deviation(horizon)
  double horizon = 0.0;
};

/// Monte Carlo decay of the ergodic average from a fixed start. bbar defaults
/// to the model's closed-form averaged drift.
ErgodicDecay ergodic_decay(const CoefficientSet& model, const ErgodicDecayConfig& config, const NoiseStream& stream,
                           ConstVec bbar = {});

struct ContractionResult {
  std::vector<double> s;
  std::vector<double> ratio;  // |Y^1_s - Y^2_s|^2 / (e^{-beta s} |y1 - y2|^2)
  double max_ratio = 0.0;
};

/// Two frozen trajectories from y1 and y2 on the same noise.
ContractionResult contraction_check(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                                    ConstVec y1, ConstVec y2, double horizon, double h_frozen,
                                    const NoiseStream& stream, FrozenKey key = {});

struct DiagnosticsConfig {
  std::vector<double> epsilons{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512};
  StrongErrorConfig run = [] {
    StrongErrorConfig c;
    c.particles = 500;
    c.replicates = 4;
    return c;
  }();
  double holder_epsilon = 1.0 / 64;
  double holder_t0 = 0.5;
  std::vector<double> holder_lags{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  double sweep_epsilon = 1.0 / 1024;
  std::vector<double> sweep_deltas{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  std::size_t sweep_particles = 1000;
  std::size_t sweep_replicates = 4;
  ErgodicDecayConfig decay;

  void validate(const Dimensions& dims) const;
};

struct DiagnosticsReport {
  std::string model_id;
  std::uint64_t seed = 0;
  DiagnosticsConfig config;
  std::vector<MomentTableRow> moments;
  double moment_spread_x = 0.0;
  double moment_spread_y = 0.0;
  HolderResult holder;
  DeltaSweep sweep;
  ErgodicDecay decay;
};

DiagnosticsReport diagnostics_suite(const CoefficientSet& model, const DiagnosticsConfig& config,
                                    const NoiseStream& stream);

/// diagnostic,parameter,value,se,seed
std::string diagnostics_csv(const DiagnosticsReport& report);
/// delta,err_y,se_y,err_x,se_x,epsilon,seed
std::string delta_sweep_csv(const DeltaSweep& sweep, std::uint64_t seed);
/// s,deviation,se,seed
std::string ergodic_decay_csv(const ErgodicDecay& decay, std::uint64_t seed);

}  // namespace mvavg
