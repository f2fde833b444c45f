#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mvavg/csv.hpp"
#include "mvavg/experiments.hpp"
#include "mvavg/parallel.hpp"

namespace mvavg {

namespace {

std::size_t exact_ratio(double value, double step, const char* what) {
  const double ratio = value / step;
  const double rounded = std::round(ratio);
  if (!(value > 0.0) || rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
    throw std::invalid_argument(std::string(what) + " " + format_double(value) + " is not a multiple of the step " +
                                format_double(step));
  return static_cast<std::size_t>(rounded);
}

std::vector<double> log_values(std::span<const double> v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(std::log(x));
  return out;
}

LineFit log_log_fit(std::span<const double> x, std::span<const double> y, std::span<const double> se) {
  const auto lx = log_values(x);
  const auto ly = log_values(y);
  std::vector<double> w;
  bool weighted = true;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (se[i] > 0.0)
      w.push_back((y[i] / se[i]) * (y[i] / se[i]));
    else
      weighted = false;
  }
  return weighted ? weighted_line_fit(lx, ly, w) : weighted_line_fit(lx, ly);
}

}  // namespace

std::vector<MomentTableRow> moment_table(const CoefficientSet& model, std::span<const double> epsilons,
                                         const StrongErrorConfig& config, const NoiseStream& stream) {
  config.validate(model.dims);
  const std::size_t coarse_steps = static_cast<std::size_t>(std::round(config.horizon / config.slow_step));
  const std::size_t stride_coarse = coarse_steps / config.checkpoints;
  std::vector<MomentTableRow> table;
  for (double eps : epsilons) {
    const std::size_t fine_per_step = config.fine_per_step != 0
                                          ? config.fine_per_step
                                          : fine_steps_per_slow_step(config.slow_step, eps, model.beta);
    const TimeGrid grid{config.horizon, config.slow_step / static_cast<double>(fine_per_step),
                        stride_coarse * fine_per_step};
    std::vector<std::vector<MomentRow>> tracks(config.replicates);
    parallel_for(config.replicates, config.workers, [&](std::size_t r) {
      tracks[r] = simulate_slowfast(model, eps, grid, config.particles, static_cast<std::uint32_t>(r), stream,
                                    config.init)
                      .moments;
    });
    MomentTableRow row;
    row.epsilon = eps;
    const std::size_t n_cp = tracks.front().size();
    const double inv_m = 1.0 / static_cast<double>(config.replicates);
    for (std::size_t c = 0; c < n_cp; ++c) {
      double m4x = 0.0, m4y = 0.0;
      for (std::size_t r = 0; r < config.replicates; ++r) {
        m4x += tracks[r][c].m4_x * inv_m;
        m4y += tracks[r][c].m4_y * inv_m;
      }
      row.max_m4_x = std::max(row.max_m4_x, m4x);
      row.max_m4_y = std::max(row.max_m4_y, m4y);
    }
    table.push_back(row);
  }
  return table;
}

double moment_spread(std::span<const MomentTableRow> table, bool slow) {
  if (table.empty()) throw std::invalid_argument("moment_spread: empty table");
  double lo = slow ? table.front().max_m4_x : table.front().max_m4_y;
  double hi = lo;
  for (const auto& row : table) {
    const double v = slow ? row.max_m4_x : row.max_m4_y;
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

HolderResult holder_in_time(const CoefficientSet& model, double epsilon, double t0, std::span<const double> lags,
                            const StrongErrorConfig& config, const NoiseStream& stream) {
  config.validate(model.dims);
  if (lags.size() < 2) throw std::invalid_argument("holder_in_time: need at least two lags");
  if (!(t0 >= 0.0)) throw std::invalid_argument("holder_in_time: t0 must be non-negative");
  const std::size_t fine_per_step = fine_steps_per_slow_step(config.slow_step, epsilon, model.beta);
  const double h = config.slow_step / static_cast<double>(fine_per_step);
  const std::size_t k0 = t0 == 0.0 ? 0 : exact_ratio(t0, h, "holder_in_time: t0");
  std::vector<std::size_t> offsets;
  for (double lag : lags) offsets.push_back(exact_ratio(lag, h, "holder_in_time: lag"));
  const std::size_t total = k0 + *std::max_element(offsets.begin(), offsets.end());
  const std::size_t n = model.dims.n;

  HolderResult result;
  result.epsilon = epsilon;
  result.t0 = t0;
  result.lags.assign(lags.begin(), lags.end());
  ReplicateMatrix inc{config.replicates, lags.size(), std::vector<double>(config.replicates * lags.size())};
  parallel_for(config.replicates, config.workers, [&](std::size_t r) {
    SlowFastEnsemble ens(model, epsilon, config.particles, config.init, stream, static_cast<std::uint32_t>(r),
                         static_cast<std::uint32_t>(total));
    std::vector<double> base;
    if (k0 == 0) base.assign(ens.x().begin(), ens.x().end());
    while (ens.step_index() < total) {
      ens.step(h);
      const std::size_t k = ens.step_index();
      if (k == k0) base.assign(ens.x().begin(), ens.x().end());
      for (std::size_t l = 0; l < offsets.size(); ++l) {
        if (k != k0 + offsets[l]) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < config.particles * n; ++i) acc += (ens.x()[i] - base[i]) * (ens.x()[i] - base[i]);
        inc.values[r * lags.size() + l] = acc / static_cast<double>(config.particles);
      }
    }
  });
  std::vector<double> column(config.replicates);
  for (std::size_t l = 0; l < lags.size(); ++l) {
    for (std::size_t r = 0; r < config.replicates; ++r) column[r] = inc.at(r, l);
    const Summary s = summarize(column);
    result.increments.push_back(s.mean);
    result.standard_errors.push_back(s.standard_error);
  }
  result.fit = log_log_fit(result.lags, result.increments, result.standard_errors);
  return result;
}

DeltaSweep delta_sweep(const CoefficientSet& model, double epsilon, std::span<const double> deltas,
                       const StrongErrorConfig& config, const NoiseStream& stream) {
  config.validate(model.dims);
  if (deltas.size() < 2) throw std::invalid_argument("delta_sweep: need at least two deltas");
  const double bound = slowfast_step_bound(epsilon, model.beta);
  const double smallest = *std::min_element(deltas.begin(), deltas.end());
  const double h = smallest / std::ceil(smallest / bound * (1.0 - 1e-12));
  for (double d : deltas) exact_ratio(d, h, "delta_sweep: delta");
  const std::size_t steps = exact_ratio(config.horizon, h, "delta_sweep: horizon");
  const double two_thirds = std::max(1.0, std::round(std::pow(epsilon, 2.0 / 3.0) / h)) * h;

  std::vector<double> all(deltas.begin(), deltas.end());
  all.push_back(two_thirds);
  const std::size_t nd = all.size();
  // Per replicate and delta: sup over nodes is taken after averaging, so keep full gap tracks.
  std::vector<std::vector<AuxiliaryTrajectory>> runs(config.replicates);
  parallel_for(config.replicates, config.workers, [&](std::size_t r) {
    auto traj = simulate_auxiliary(model, epsilon, all, TimeGrid{config.horizon, h, steps}, config.particles,
                                   static_cast<std::uint32_t>(r), stream, config.init);
    for (auto& t : traj) t.checkpoints.clear();
    runs[r] = std::move(traj);
  });

  DeltaSweep sweep;
  sweep.epsilon = epsilon;
  sweep.fine_step = h;
  for (std::size_t a = 0; a < nd; ++a) {
    DeltaSweepRow row;
    row.delta = all[a];
    const std::size_t nodes = runs.front()[a].y_gap.size();
    ReplicateMatrix ym{config.replicates, nodes, std::vector<double>(config.replicates * nodes)};
    ReplicateMatrix xm = ym;
    for (std::size_t r = 0; r < config.replicates; ++r) {
      std::copy(runs[r][a].y_gap.begin(), runs[r][a].y_gap.end(), ym.values.begin() + r * nodes);
      std::copy(runs[r][a].x_gap.begin(), runs[r][a].x_gap.end(), xm.values.begin() + r * nodes);
    }
    const SupEstimate sy = sup_over_checkpoints(ym);
    const SupEstimate sx = sup_over_checkpoints(xm);
    row.err_y = sy.value;
    row.se_y = sy.standard_error;
    row.err_x = sx.value;
    row.se_x = sx.standard_error;
    if (a + 1 < nd)
      sweep.rows.push_back(row);
    else
      sweep.two_thirds = row;
  }
  std::vector<double> d, ey, sey, ex, sex;
  for (const auto& row : sweep.rows) {
    d.push_back(row.delta);
    ey.push_back(row.err_y);
    sey.push_back(row.se_y);
    ex.push_back(row.err_x);
    sex.push_back(row.se_x);
  }
  sweep.fit_y = log_log_fit(d, ey, sey);
  sweep.fit_x = log_log_fit(d, ex, sex);
  return sweep;
}

ErgodicDecay ergodic_decay(const CoefficientSet& model, const ErgodicDecayConfig& config, const NoiseStream& stream,
                           ConstVec bbar) {
  model.validate();
  const auto& dims = model.dims;
  if (config.x.size() != dims.n || config.y0.size() != dims.m)
    throw std::invalid_argument("ergodic_decay: x or y0 has the wrong dimension");
  if (config.mu_points.empty() || config.mu_points.size() % dims.n != 0)
    throw std::invalid_argument("ergodic_decay: mu_points must hold whole atoms");
  if (config.n_traj < 2 || config.n_points < 3) throw std::invalid_argument("ergodic_decay: too few paths or nodes");
  const double horizon = config.horizon > 0.0 ? config.horizon : 10.0 / (model.beta / 2.0);
  const std::size_t steps = exact_ratio(horizon, config.h_frozen, "ergodic_decay: horizon");
  if ((steps % (config.n_points - 1)) != 0)
    throw std::invalid_argument("ergodic_decay: n_points - 1 must divide the number of frozen steps");
  const std::size_t stride = steps / (config.n_points - 1);

  const ParticleCloud mu_cloud(config.mu_points.size() / dims.n, dims.n, config.mu_points);
  const EmpiricalMeasure mu = mu_cloud.view(&model.measure_features);
  std::vector<double> target(dims.n);
  if (!bbar.empty()) {
    if (bbar.size() != dims.n) throw std::invalid_argument("ergodic_decay: bbar has the wrong dimension");
    std::copy(bbar.begin(), bbar.end(), target.begin());
  } else if (model.averaged_drift) {
    (*model.averaged_drift)(config.t, config.x, mu, target);
  } else {
    throw std::invalid_argument("ergodic_decay: model '" + model.id + "' needs an explicit averaged drift value");
  }

  // Paths are summed in fixed blocks so the reduction order does not depend
  // on the worker count.
  constexpr std::size_t kBlock = 1024;
  const std::size_t np = config.n_points;
  const std::size_t width = np * dims.n;
  const std::size_t n_blocks = (config.n_traj + kBlock - 1) / kBlock;
  std::vector<double> sums(n_blocks * width, 0.0), squares(n_blocks * width, 0.0);
  parallel_for(n_blocks, config.workers, [&](std::size_t blk) {
    double* sum = sums.data() + blk * width;
    double* sq = squares.data() + blk * width;
    std::vector<double> y(dims.m), b(dims.n);
    const std::size_t end = std::min(config.n_traj, (blk + 1) * kBlock);
    for (std::size_t j = blk * kBlock; j < end; ++j) {
      FrozenStepper stepper(model, config.t, config.x, mu, config.h_frozen, stream,
                            {config.replicate, static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(steps)});
      y = config.y0;
      for (std::size_t k = 0; k <= steps; ++k) {
        if (k > 0) stepper.advance(y, k - 1);
        if (k % stride != 0) continue;
        model.slow_drift(config.t, config.x, mu, y, b);
        for (std::size_t c = 0; c < dims.n; ++c) {
          const double v = b[c] - target[c];
          sum[(k / stride) * dims.n + c] += v;
          sq[(k / stride) * dims.n + c] += v * v;
        }
      }
    }
  });

  ErgodicDecay decay;
  decay.horizon = horizon;
  const double n_paths = static_cast<double>(config.n_traj);
  for (std::size_t p = 0; p < np; ++p) {
    double dev2 = 0.0, var = 0.0;
    for (std::size_t c = 0; c < dims.n; ++c) {
      double total = 0.0, total_sq = 0.0;
      for (std::size_t blk = 0; blk < n_blocks; ++blk) {
        total += sums[blk * width + p * dims.n + c];
        total_sq += squares[blk * width + p * dims.n + c];
      }
      const double mean = total / n_paths;
      const double sample_var = std::max(0.0, (total_sq - n_paths * mean * mean) / (n_paths - 1.0));
      dev2 += mean * mean;
      var += sample_var / n_paths;
    }
    decay.points.push_back({static_cast<double>(p * stride) * config.h_frozen, std::sqrt(dev2), std::sqrt(var)});
  }
  std::vector<double> s, logd, w;
  for (const auto& pt : decay.points) {
    if (!(pt.deviation > 3.0 * pt.se) || !(pt.deviation > 0.0)) continue;
    s.push_back(pt.s);
    logd.push_back(std::log(pt.deviation));
    w.push_back(pt.se > 0.0 ? (pt.deviation / pt.se) * (pt.deviation / pt.se) : 1.0);
  }
  decay.fitted_points = s.size();
  if (s.size() >= 2) {
    const LineFit fit = weighted_line_fit(s, logd, w);
    decay.rate = -fit.slope;
    decay.rate_se = fit.slope_se;
  }
  const double last = decay.points.back().deviation;
  decay.decay_ratio = last > 0.0 ? decay.points.front().deviation / last : std::numeric_limits<double>::infinity();
  return decay;
}

ContractionResult contraction_check(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu,
                                    ConstVec y1, ConstVec y2, double horizon, double h_frozen,
                                    const NoiseStream& stream, FrozenKey key) {
  const FrozenPath a = simulate_frozen(model, t, x, mu, y1, horizon, h_frozen, stream, key);
  const FrozenPath b = simulate_frozen(model, t, x, mu, y2, horizon, h_frozen, stream, key);
  double d0 = 0.0;
  for (std::size_t c = 0; c < y1.size(); ++c) d0 += (y1[c] - y2[c]) * (y1[c] - y2[c]);
  if (!(d0 > 0.0)) throw std::invalid_argument("contraction_check: starting points must differ");
  ContractionResult result;
  for (std::size_t k = 0; k < a.nodes(); ++k) {
    const double s = static_cast<double>(k) * h_frozen;
    double dk = 0.0;
    for (std::size_t c = 0; c < a.dim; ++c) dk += (a.at(k)[c] - b.at(k)[c]) * (a.at(k)[c] - b.at(k)[c]);
    const double ratio = dk / (std::exp(-model.beta * s) * d0);
    result.s.push_back(s);
    result.ratio.push_back(ratio);
    result.max_ratio = std::max(result.max_ratio, ratio);
  }
  return result;
}

void DiagnosticsConfig::validate(const Dimensions& dims) const {
  std::vector<std::string> problems;
  auto check_eps = [&](double e, const char* name) {
    if (!(e > 0.0 && e < 1.0)) problems.push_back(std::string(name) + " must lie in (0, 1)");
  };
  if (epsilons.empty()) problems.push_back("epsilon grid is empty");
  for (double e : epsilons) check_eps(e, "every epsilon");
  check_eps(holder_epsilon, "holder_epsilon");
  check_eps(sweep_epsilon, "sweep_epsilon");
  if (holder_lags.size() < 2) problems.push_back("holder_lags needs at least two values");
  if (sweep_deltas.size() < 2) problems.push_back("sweep_deltas needs at least two values");
  if (sweep_particles == 0) problems.push_back("sweep_particles must be positive");
  if (sweep_replicates < 2) problems.push_back("sweep_replicates must be at least 2");
  if (decay.n_traj < 2) problems.push_back("decay.n_traj must be at least 2");
  if (!(decay.h_frozen > 0.0)) problems.push_back("decay.h_frozen must be positive");
  if (decay.x.size() != dims.n) problems.push_back("decay.x has the wrong dimension");
  if (decay.y0.size() != dims.m) problems.push_back("decay.y0 has the wrong dimension");
  try {
    run.validate(dims);
  } catch (const std::invalid_argument& e) {
    problems.emplace_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "diagnostics config: ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw std::invalid_argument(msg);
  }
}

DiagnosticsReport diagnostics_suite(const CoefficientSet& model, const DiagnosticsConfig& config,
                                    const NoiseStream& stream) {
  config.validate(model.dims);
  DiagnosticsReport report;
  report.model_id = model.id;
  report.seed = stream.seed();
  report.config = config;
  report.moments = moment_table(model, config.epsilons, config.run, stream);
  report.moment_spread_x = moment_spread(report.moments, true);
  report.moment_spread_y = moment_spread(report.moments, false);
  report.holder = holder_in_time(model, config.holder_epsilon, config.holder_t0, config.holder_lags, config.run, stream);
  StrongErrorConfig sweep_run = config.run;
  sweep_run.particles = config.sweep_particles;
  sweep_run.replicates = config.sweep_replicates;
  report.sweep = delta_sweep(model, config.sweep_epsilon, config.sweep_deltas, sweep_run, stream);
  ErgodicDecayConfig decay = config.decay;
  decay.workers = config.run.workers;
  report.decay = ergodic_decay(model, decay, stream);
  return report;
}

std::string diagnostics_csv(const DiagnosticsReport& report) {
  CsvWriter csv({"diagnostic", "parameter", "value", "se", "seed"});
  const auto seed = static_cast<unsigned long long>(report.seed);
  auto row = [&](std::string_view name, double parameter, double value, double se) {
    csv.cell(name).cell(parameter).cell(value).cell(se).cell(seed).end_row();
  };
  for (const auto& m : report.moments) {
    row("m4_x", m.epsilon, m.max_m4_x, 0.0);
    row("m4_y", m.epsilon, m.max_m4_y, 0.0);
  }
  row("m4_x_spread", 0.0, report.moment_spread_x, 0.0);
  row("m4_y_spread", 0.0, report.moment_spread_y, 0.0);
  for (std::size_t l = 0; l < report.holder.lags.size(); ++l)
    row("holder_increment", report.holder.lags[l], report.holder.increments[l], report.holder.standard_errors[l]);
  row("holder_slope", report.holder.epsilon, report.holder.fit.slope, report.holder.fit.slope_se);
  row("delta_slope_y", report.sweep.epsilon, report.sweep.fit_y.slope, report.sweep.fit_y.slope_se);
  row("delta_slope_x", report.sweep.epsilon, report.sweep.fit_x.slope, report.sweep.fit_x.slope_se);
  row("two_thirds_gap_y", report.sweep.two_thirds.delta, report.sweep.two_thirds.err_y, report.sweep.two_thirds.se_y);
  row("two_thirds_gap_x", report.sweep.two_thirds.delta, report.sweep.two_thirds.err_x, report.sweep.two_thirds.se_x);
  row("ergodic_rate", report.decay.horizon, report.decay.rate, report.decay.rate_se);
  row("ergodic_decay_ratio", report.decay.horizon, report.decay.decay_ratio, 0.0);
  return csv.str();
}

std::string delta_sweep_csv(const DeltaSweep& sweep, std::uint64_t seed) {
  CsvWriter csv({"delta", "err_y", "se_y", "err_x", "se_x", "epsilon", "seed"});
  auto emit = [&](const DeltaSweepRow& row) {
    csv.cell(row.delta).cell(row.err_y).cell(row.se_y).cell(row.err_x).cell(row.se_x).cell(sweep.epsilon);
    csv.cell(static_cast<unsigned long long>(seed)).end_row();
  };
  for (const auto& row : sweep.rows) emit(row);
  return csv.str();
}

std::string ergodic_decay_csv(const ErgodicDecay& decay, std::uint64_t seed) {
  CsvWriter csv({"s", "deviation", "se", "seed"});
  for (const auto& p : decay.points)
    csv.cell(p.s).cell(p.deviation).cell(p.se).cell(static_cast<unsigned long long>(seed)).end_row();
  return csv.str();
}

}  // namespace mvavg
