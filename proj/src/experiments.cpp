#include "mvavg/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mvavg/csv.hpp"
#include "mvavg/parallel.hpp"

namespace mvavg {

namespace {

void join_problems(const std::vector<std::string>& problems, const char* what) {
  if (problems.empty()) return;
  std::string msg = what;
  msg += ": ";
  for (std::size_t i = 0; i < problems.size(); ++i) {
    if (i > 0) msg += "; ";
    msg += problems[i];
  }
  throw std::invalid_argument(msg);
}

double squared_distance(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

void StrongErrorConfig::validate(const Dimensions& dims) const {
  std::vector<std::string> problems;
  if (!(horizon > 0.0) || !std::isfinite(horizon)) problems.push_back("horizon must be positive");
  if (!(slow_step > 0.0) || !std::isfinite(slow_step)) problems.push_back("slow_step must be positive");
  if (particles == 0) problems.push_back("particles must be at least 1");
  if (replicates < 2) problems.push_back("replicates must be at least 2");
  if (checkpoints == 0) problems.push_back("checkpoints must be at least 1");
  if (init.x.size() != dims.n) problems.push_back("initial x has the wrong dimension");
  if (init.y.size() != dims.m) problems.push_back("initial y has the wrong dimension");
  if (horizon > 0.0 && slow_step > 0.0 && std::isfinite(horizon) && std::isfinite(slow_step)) {
    const double ratio = horizon / slow_step;
    const double steps = std::round(ratio);
    if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * ratio) {
      problems.push_back("horizon / slow_step must be an integer");
    } else if (checkpoints != 0 && static_cast<std::size_t>(steps) % checkpoints != 0) {
      problems.push_back("checkpoints must divide horizon / slow_step");
    }
  }
  join_problems(problems, "strong error config");
}

std::size_t fine_steps_per_slow_step(double slow_step, double epsilon, double beta) {
  const double ratio = slow_step / slowfast_step_bound(epsilon, beta);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12))));
}

StrongErrorResult strong_error(const CoefficientSet& model, double epsilon, const StrongErrorConfig& config,
                               const NoiseStream& stream) {
  model.validate();
  config.validate(model.dims);
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("strong_error: epsilon must lie in (0, 1)");
  if (config.drift.source == DriftSource::Analytic && !model.averaged_drift)
    throw std::invalid_argument("strong_error: model '" + model.id + "' has no closed-form averaged drift");

  const std::size_t coarse_steps = static_cast<std::size_t>(std::round(config.horizon / config.slow_step));
  const std::size_t stride_coarse = coarse_steps / config.checkpoints;
  const std::size_t fine_per_step = config.fine_per_step != 0
                                        ? config.fine_per_step
                                        : fine_steps_per_slow_step(config.slow_step, epsilon, model.beta);
  const double fine_step = config.slow_step / static_cast<double>(fine_per_step);
  const TimeGrid fine_grid{config.horizon, fine_step, stride_coarse * fine_per_step};
  const TimeGrid coarse_grid{config.horizon, config.slow_step, stride_coarse};
  const std::size_t n_cp = config.checkpoints + 1;

  StrongErrorResult result;
  result.epsilon = epsilon;
  result.fine_step = fine_step;
  result.fine_per_step = fine_per_step;
  result.squared_error = {config.replicates, n_cp, std::vector<double>(config.replicates * n_cp)};
  std::vector<std::vector<MomentRow>> moments(config.replicates);

  parallel_for(config.replicates, config.workers, [&](std::size_t r) {
    const auto rep = static_cast<std::uint32_t>(r);
    const SlowFastTrajectory sf =
        simulate_slowfast(model, epsilon, fine_grid, config.particles, rep, stream, config.init);
    const AveragedTrajectory av = simulate_averaged(model, coarse_grid, fine_per_step, config.particles, rep, stream,
                                                    config.init.x, config.drift);
    if (sf.checkpoints.size() != n_cp || av.checkpoints.size() != n_cp)
      throw std::logic_error("strong_error: checkpoint grids disagree");
    for (std::size_t c = 0; c < n_cp; ++c) {
      const ParticleCloud& a = sf.checkpoints[c].x;
      const ParticleCloud& b = av.checkpoints[c].x;
      double acc = 0.0;
      for (std::size_t i = 0; i < config.particles; ++i) acc += squared_distance(a.row(i), b.row(i));
      result.squared_error.values[r * n_cp + c] = acc / static_cast<double>(config.particles);
    }
    moments[r] = sf.moments;
  });

  for (std::size_t c = 0; c < n_cp; ++c) result.times.push_back(coarse_grid.time(c * stride_coarse));
  const SupEstimate sup = sup_over_checkpoints(result.squared_error);
  result.error = sup.value;
  result.standard_error = sup.standard_error;
  result.argmax = sup.argmax;

  const double inv_m = 1.0 / static_cast<double>(config.replicates);
  result.moments.resize(n_cp);
  for (std::size_t c = 0; c < n_cp; ++c) {
    MomentRow row;
    row.t = result.times[c];
    for (std::size_t r = 0; r < config.replicates; ++r) {
      row.m2_x += moments[r][c].m2_x * inv_m;
      row.m4_x += moments[r][c].m4_x * inv_m;
      row.m2_y += moments[r][c].m2_y * inv_m;
      row.m4_y += moments[r][c].m4_y * inv_m;
    }
    result.moments[c] = row;
    result.max_m4_x = std::max(result.max_m4_x, row.m4_x);
    result.max_m4_y = std::max(result.max_m4_y, row.m4_y);
  }
  return result;
}

void ConvergenceConfig::validate(const Dimensions& dims) const {
  std::vector<std::string> problems;
  if (epsilons.size() < 3) problems.push_back("epsilon grid needs at least three values");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0 && epsilons[i] < 1.0))
      problems.push_back("epsilon " + format_double(epsilons[i]) + " is outside (0, 1)");
    if (i > 0 && !(epsilons[i] < epsilons[i - 1])) problems.push_back("epsilon grid must be strictly decreasing");
  }
  try {
    run.validate(dims);
  } catch (const std::invalid_argument& e) {
    problems.emplace_back(e.what());
  }
  join_problems(problems, "convergence config");
}

bool strictly_decreasing(std::span<const double> errors, std::span<const double> standard_errors, double factor) {
  if (errors.size() != standard_errors.size()) throw std::invalid_argument("strictly_decreasing: length mismatch");
  for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
    const double combined = std::sqrt(standard_errors[k] * standard_errors[k] +
                                      standard_errors[k + 1] * standard_errors[k + 1]);
    if (!(errors[k] - errors[k + 1] > factor * combined)) return false;
  }
  return true;
}

ConvergenceReport run_convergence(const CoefficientSet& model, const ConvergenceConfig& config,
                                  const NoiseStream& stream) {
  config.validate(model.dims);
  ConvergenceReport report;
  report.model_id = model.id;
  report.seed = stream.seed();
  report.config = config;
  std::vector<ReplicateMatrix> samples;
  for (double eps : config.epsilons) {
    StrongErrorResult run = strong_error(model, eps, config.run, stream);
    report.epsilon_grid.push_back(eps);
    report.errors.push_back(run.error);
    report.standard_errors.push_back(run.standard_error);
    samples.push_back(run.squared_error);
    report.runs.push_back(std::move(run));
  }
  report.fit = rate_fit(report.epsilon_grid, report.errors, report.standard_errors, samples, config.bootstrap,
                        stream.seed());
  report.decreasing = strictly_decreasing(report.errors, report.standard_errors);
  report.bound_constant = report.errors.front() / std::pow(report.epsilon_grid.front(), 2.0 / 3.0);
  report.bound_consistent = true;
  for (std::size_t i = 0; i < report.errors.size(); ++i) {
    const double bound = report.bound_constant * std::pow(report.epsilon_grid[i], 2.0 / 3.0);
    if (report.errors[i] > bound * (1.0 + 1e-12)) report.bound_consistent = false;
  }
  return report;
}

std::string convergence_csv(const ConvergenceReport& report) {
  CsvWriter csv({"epsilon", "error", "se", "n_particles", "n_reps", "seed"});
  for (std::size_t i = 0; i < report.errors.size(); ++i) {
    csv.cell(report.epsilon_grid[i])
        .cell(report.errors[i])
        .cell(report.standard_errors[i])
        .cell(static_cast<unsigned long long>(report.config.run.particles))
        .cell(static_cast<unsigned long long>(report.config.run.replicates))
        .cell(static_cast<unsigned long long>(report.seed))
        .end_row();
  }
  return csv.str();
}

}  // namespace mvavg
