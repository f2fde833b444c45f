#include "mvavg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mvavg/csv.hpp"
#include "mvavg/errors.hpp"
#include "mvavg/experiments.hpp"
#include "mvavg/model.hpp"
#include "mvavg/parallel.hpp"
#include "mvavg/poisson.hpp"
#include "mvavg/solvers.hpp"

namespace mvavg::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out;
  std::string model;
  std::vector<std::string> sets;
};

struct Outcome {
  json results = json::object();
  std::vector<std::pair<std::string, std::string>> files;  // name, content
};

Config effective_config(const CommonOptions& opts) {
  std::vector<std::string> problems;
  Config cfg = default_config();
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + opts.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    const Config file = Config::parse(buf.str(), opts.config_path, problems);
    cfg.overlay(file, opts.config_path, problems);
  }
  Config flags;
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || eq == dot + 1) {
      problems.push_back("--set '" + s + "': expected section.key=value");
      continue;
    }
    flags.set(s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
  }
  if (!opts.model.empty()) flags.set("model", "name", opts.model);
  if (opts.seed) flags.set("run", "seed", std::to_string(*opts.seed));
  cfg.overlay(flags, "command line", problems);
  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

json config_json(const Config& cfg) {
  json j = json::object();
  for (const auto& [section, entries] : cfg.sections()) {
    json s = json::object();
    for (const auto& [key, value] : entries) s[key] = value;
    j[section] = s;
  }
  return j;
}

void collect(std::vector<std::string>& problems, const std::function<void()>& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    problems.emplace_back(e.what());
  }
}

void finish_validation(Reader& reader, std::vector<std::string> extra) {
  std::vector<std::string> problems = reader.problems();
  problems.insert(problems.end(), extra.begin(), extra.end());
  if (!problems.empty()) throw ConfigError(problems);
}

std::optional<CoefficientSet> read_model(Reader& r, std::vector<std::string>& problems) {
  const std::string name = r.text("model", "name");
  LinearBenchmarkParams p;
  p.a1 = r.real("model", "a1");
  p.a2 = r.real("model", "a2");
  p.a3 = r.real("model", "a3");
  p.c1 = r.real("model", "c1");
  p.c2 = r.real("model", "c2");
  p.kappa = r.real("model", "kappa");
  p.sigma_x = r.real("model", "sigma_x");
  p.sigma_y = r.real("model", "sigma_y");
  try {
    if (name == "linear") return linear_benchmark(p);
    if (name == "convolution-sine") return convolution_example(ConvolutionPair::Sine);
    if (name == "convolution-cosine-tanh") return convolution_example(ConvolutionPair::CosineTanh);
    problems.push_back("model.name: unknown model '" + name +
                       "' (linear, convolution-sine, convolution-cosine-tanh)");
  } catch (const std::invalid_argument& e) {
    problems.emplace_back(std::string("model: ") + e.what());
  }
  return std::nullopt;
}

StrongErrorConfig read_run(Reader& r, unsigned workers) {
  StrongErrorConfig c;
  c.horizon = r.real("grid", "horizon");
  c.slow_step = r.real("grid", "slow_step");
  c.checkpoints = r.count("grid", "checkpoints");
  c.fine_per_step = r.count("grid", "fine_per_step");
  c.particles = r.count("ensemble", "particles");
  c.replicates = r.count("ensemble", "replicates");
  c.init.x = r.reals("ensemble", "x0");
  c.init.y = r.reals("ensemble", "y0");
  c.workers = workers;
  return c;
}

AveragedDriftConfig read_drift(Reader& r, const std::optional<CoefficientSet>& model,
                               std::vector<std::string>& problems) {
  AveragedDriftConfig d;
  const std::string source = r.text("drift", "source");
  const double burn_in = r.real("drift", "burn_in");
  const std::size_t samples = r.count("drift", "samples");
  const std::size_t thin = r.count("drift", "thin");
  const double h_frozen = r.real("drift", "h_frozen");
  d.quantum = r.real("drift", "quantum");
  if (source == "analytic") {
    d.source = DriftSource::Analytic;
    if (model && !model->averaged_drift)
      problems.push_back("drift.source = analytic, but model '" + model->id + "' has no closed-form averaged drift");
  } else if (source == "ergodic") {
    d.source = DriftSource::ErgodicEstimate;
  } else {
    problems.push_back("drift.source: expected analytic or ergodic, got '" + source + "'");
  }
  if (!(d.quantum > 0.0)) problems.push_back("drift.quantum must be positive");
  if (!(h_frozen > 0.0)) problems.push_back("drift.h_frozen must be positive");
  if (samples == 0) problems.push_back("drift.samples must be positive");
  if (model && h_frozen > 0.0 && samples > 0) {
    d.sampling = default_sampling(model->beta, h_frozen, samples);
    if (burn_in > 0.0) d.sampling.burn_in = burn_in;
    if (thin > 0) d.sampling.thin_steps = thin;
    if (d.sampling.burn_in < minimum_burn_in(model->beta))
      problems.push_back("drift.burn_in is below the minimum " + format_double(minimum_burn_in(model->beta)));
    if (h_frozen > frozen_step_bound(model->beta))
      problems.push_back("drift.h_frozen exceeds the stability bound " +
                         format_double(frozen_step_bound(model->beta)));
  }
  return d;
}

// Dimensions to validate against: the model's, or, when the model itself is
// invalid, whatever the initial state implies so the remaining checks still run.
Dimensions validation_dims(const std::optional<CoefficientSet>& model, const StrongErrorConfig& run) {
  if (model) return model->dims;
  return {run.init.x.size(), run.init.y.size(), 1, 1};
}

json fit_json(const RateFit& f) {
  return json{{"slope", f.slope},
              {"intercept", f.intercept},
              {"ci_low", f.ci_low},
              {"ci_high", f.ci_high},
              {"bootstrap_samples", f.bootstrap_samples}};
}

// ---------------------------------------------------------------------------

Outcome cmd_converge(const Config& cfg, const CommonOptions& opts, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  ConvergenceConfig conv;
  conv.run = read_run(r, opts.workers);
  conv.run.drift = read_drift(r, model, problems);
  conv.epsilons = r.reals("converge", "epsilons");
  conv.bootstrap = r.count("converge", "bootstrap");
  const std::uint64_t seed = r.u64("run", "seed");
  collect(problems, [&] { conv.validate(validation_dims(model, conv.run)); });
  finish_validation(r, problems);

  const NoiseStream stream(seed);
  const ConvergenceReport report = run_convergence(*model, conv, stream);
  Outcome o;
  o.files.emplace_back("convergence.csv", convergence_csv(report));
  o.results["fit"] = fit_json(report.fit);
  o.results["decreasing"] = report.decreasing;
  o.results["bound_constant"] = report.bound_constant;
  o.results["bound_consistent"] = report.bound_consistent;
  json runs = json::array();
  for (const auto& run : report.runs)
    runs.push_back({{"epsilon", run.epsilon},
                    {"fine_step", run.fine_step},
                    {"fine_per_step", run.fine_per_step},
                    {"argmax_t", run.times[run.argmax]},
                    {"max_m4_x", run.max_m4_x},
                    {"max_m4_y", run.max_m4_y}});
  o.results["runs"] = runs;
  out << "slope " << format_double(report.fit.slope) << " [" << format_double(report.fit.ci_low) << ", "
      << format_double(report.fit.ci_high) << "]\n";
  return o;
}

Outcome cmd_diagnostics(const Config& cfg, const CommonOptions& opts, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  DiagnosticsConfig d;
  d.run = read_run(r, opts.workers);
  d.run.particles = r.count("diagnostics", "particles");
  d.run.replicates = r.count("diagnostics", "replicates");
  d.epsilons = r.reals("diagnostics", "epsilons");
  d.holder_epsilon = r.real("diagnostics", "holder_epsilon");
  d.holder_t0 = r.real("diagnostics", "holder_t0");
  d.holder_lags = r.reals("diagnostics", "holder_lags");
  d.sweep_epsilon = r.real("diagnostics", "sweep_epsilon");
  d.sweep_deltas = r.reals("diagnostics", "sweep_deltas");
  d.sweep_particles = r.count("diagnostics", "sweep_particles");
  d.sweep_replicates = r.count("diagnostics", "sweep_replicates");
  d.decay.x = r.reals("ergodicity", "x");
  d.decay.mu_points = r.reals("ergodicity", "mu");
  d.decay.y0 = r.reals("ergodicity", "y0");
  d.decay.horizon = r.real("ergodicity", "horizon");
  d.decay.h_frozen = r.real("ergodicity", "h_frozen");
  d.decay.n_traj = r.count("ergodicity", "n_traj");
  d.decay.n_points = r.count("ergodicity", "n_points");
  const std::uint64_t seed = r.u64("run", "seed");
  collect(problems, [&] { d.validate(validation_dims(model, d.run)); });
  if (model) {
    if (!model->averaged_drift)
      problems.push_back("diagnostics: model '" + model->id + "' has no closed-form averaged drift for the decay fit");
  }
  finish_validation(r, problems);

  const NoiseStream stream(seed);
  const DiagnosticsReport report = diagnostics_suite(*model, d, stream);
  Outcome o;
  o.files.emplace_back("diagnostics.csv", diagnostics_csv(report));
  o.files.emplace_back("delta_sweep.csv", delta_sweep_csv(report.sweep, seed));
  o.files.emplace_back("ergodic_decay.csv", ergodic_decay_csv(report.decay, seed));
  o.results["moment_spread_x"] = report.moment_spread_x;
  o.results["moment_spread_y"] = report.moment_spread_y;
  o.results["holder_slope"] = report.holder.fit.slope;
  o.results["delta_slope_y"] = report.sweep.fit_y.slope;
  o.results["delta_slope_x"] = report.sweep.fit_x.slope;
  o.results["ergodic_rate"] = report.decay.rate;
  o.results["ergodic_reference_rate"] = model->beta / 2.0;
  o.results["ergodic_decay_ratio"] = report.decay.decay_ratio;
  out << "holder slope " << format_double(report.holder.fit.slope) << "\n"
      << "delta slopes y " << format_double(report.sweep.fit_y.slope) << " x "
      << format_double(report.sweep.fit_x.slope) << "\n"
      << "ergodic rate " << format_double(report.decay.rate) << " (beta/2 = " << format_double(model->beta / 2.0)
      << ")\n";
  return o;
}

Outcome cmd_ergodicity(const Config& cfg, const CommonOptions& opts, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  ErgodicDecayConfig d;
  d.x = r.reals("ergodicity", "x");
  d.mu_points = r.reals("ergodicity", "mu");
  d.y0 = r.reals("ergodicity", "y0");
  d.horizon = r.real("ergodicity", "horizon");
  d.h_frozen = r.real("ergodicity", "h_frozen");
  d.n_traj = r.count("ergodicity", "n_traj");
  d.n_points = r.count("ergodicity", "n_points");
  d.workers = opts.workers;
  const auto y1 = r.reals("ergodicity", "contraction_y1");
  const auto y2 = r.reals("ergodicity", "contraction_y2");
  const std::uint64_t seed = r.u64("run", "seed");
  if (model) {
    const auto& dims = model->dims;
    if (d.x.size() != dims.n) problems.push_back("ergodicity.x has the wrong dimension");
    if (d.y0.size() != dims.m) problems.push_back("ergodicity.y0 has the wrong dimension");
    if (y1.size() != dims.m || y2.size() != dims.m)
      problems.push_back("ergodicity.contraction_y1/y2 have the wrong dimension");
    if (d.mu_points.empty() || d.mu_points.size() % dims.n != 0)
      problems.push_back("ergodicity.mu must hold whole atoms");
    if (!model->averaged_drift)
      problems.push_back("ergodicity: model '" + model->id + "' has no closed-form averaged drift");
    if (!(d.h_frozen > 0.0) || d.h_frozen > frozen_step_bound(model->beta))
      problems.push_back("ergodicity.h_frozen must lie in (0, " + format_double(frozen_step_bound(model->beta)) + "]");
  }
  if (d.n_traj < 2) problems.push_back("ergodicity.n_traj must be at least 2");
  if (d.n_points < 3) problems.push_back("ergodicity.n_points must be at least 3");
  finish_validation(r, problems);

  const NoiseStream stream(seed);
  const ErgodicDecay decay = ergodic_decay(*model, d, stream);
  const ParticleCloud mu_cloud(d.mu_points.size() / model->dims.n, model->dims.n, d.mu_points);
  const auto mu = mu_cloud.view(&model->measure_features);
  const ContractionResult contraction = contraction_check(*model, d.t, d.x, mu, y1, y2, decay.horizon, d.h_frozen,
                                                          stream, FrozenKey{1, 0, 0});
  Outcome o;
  o.files.emplace_back("ergodic_decay.csv", ergodic_decay_csv(decay, seed));
  CsvWriter csv({"s", "ratio", "seed"});
  for (std::size_t k = 0; k < contraction.s.size(); ++k)
    csv.cell(contraction.s[k]).cell(contraction.ratio[k]).cell(static_cast<unsigned long long>(seed)).end_row();
  o.files.emplace_back("contraction.csv", csv.str());
  o.results["rate"] = decay.rate;
  o.results["rate_se"] = decay.rate_se;
  o.results["reference_rate"] = model->beta / 2.0;
  o.results["fitted_points"] = decay.fitted_points;
  o.results["decay_ratio"] = decay.decay_ratio;
  o.results["horizon"] = decay.horizon;
  o.results["contraction_max_ratio"] = contraction.max_ratio;
  out << "rate " << format_double(decay.rate) << " (beta/2 = " << format_double(model->beta / 2.0) << "), decay ratio "
      << format_double(decay.decay_ratio) << ", contraction max ratio " << format_double(contraction.max_ratio)
      << "\n";
  return o;
}

Outcome cmd_poisson(const Config& cfg, const CommonOptions& opts, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  const auto x = r.reals("poisson", "x");
  const auto mu_points = r.reals("poisson", "mu");
  const auto ys = r.vectors("poisson", "y_points");
  PhiConfig pc;
  pc.s_max = r.real("poisson", "s_max");
  pc.h_frozen = r.real("poisson", "h_frozen");
  pc.n_traj = r.count("poisson", "n_traj");
  pc.tolerance = r.real("poisson", "tolerance");
  pc.workers = opts.workers;
  const double fd_step = r.real("poisson", "fd_step");
  const AveragedDriftConfig drift = read_drift(r, model, problems);
  const std::uint64_t seed = r.u64("run", "seed");
  if (model) {
    const auto& dims = model->dims;
    if (x.size() != dims.n) problems.push_back("poisson.x has the wrong dimension");
    if (mu_points.empty() || mu_points.size() % dims.n != 0) problems.push_back("poisson.mu must hold whole atoms");
    for (const auto& y : ys)
      if (y.size() != dims.m) problems.push_back("poisson.y_points: every point needs " + std::to_string(dims.m) +
                                                  " components");
    if (!(pc.h_frozen > 0.0) || pc.h_frozen > frozen_step_bound(model->beta))
      problems.push_back("poisson.h_frozen must lie in (0, " + format_double(frozen_step_bound(model->beta)) + "]");
    if (!(pc.tolerance > 0.0 && pc.tolerance < 1.0)) problems.push_back("poisson.tolerance must lie in (0, 1)");
    else if (pc.s_max == 0.0) pc.s_max = minimum_phi_horizon(model->beta, pc.tolerance);
    if (pc.s_max < 0.0) problems.push_back("poisson.s_max must be non-negative");
  }
  if (pc.n_traj < 2) problems.push_back("poisson.n_traj must be at least 2");
  if (!(fd_step > 0.0)) problems.push_back("poisson.fd_step must be positive");
  // The truncation horizon must sit on the frozen grid.
  if (model && pc.s_max > 0.0 && pc.h_frozen > 0.0) pc.s_max = std::ceil(pc.s_max / pc.h_frozen - 1e-9) * pc.h_frozen;
  finish_validation(r, problems);

  const auto& dims = model->dims;
  const NoiseStream stream(seed);
  const ParticleCloud mu_cloud(mu_points.size() / dims.n, dims.n, mu_points);
  const auto mu = mu_cloud.view(&model->measure_features);
  std::vector<double> bbar(dims.n);
  json bbar_json;
  if (model->averaged_drift) {
    (*model->averaged_drift)(0.0, x, mu, bbar);
    bbar_json = {{"source", "analytic"}, {"value", bbar}};
  } else {
    const BbarEstimate est = estimate_bbar(*model, 0.0, x, mu, drift.sampling, stream, FrozenKey{1000, 0, 0});
    bbar = est.value;
    bbar_json = {{"source", "ergodic"}, {"value", est.value}, {"standard_error", est.standard_error}};
  }

  std::vector<std::string> header{"point"};
  for (const auto& n : component_names("phi", dims.n)) header.push_back(n);
  for (const auto& n : component_names("se", dims.n)) header.push_back(n);
  header.push_back("tail_bound");
  header.push_back("seed");
  CsvWriter csv(header);
  json points = json::array();
  for (std::size_t p = 0; p < ys.size(); ++p) {
    PhiConfig point_cfg = pc;
    point_cfg.replicate = static_cast<std::uint32_t>(p);
    const PhiEstimate est = estimate_phi(*model, 0.0, x, mu, ys[p], point_cfg, stream, bbar);
    csv.cell(static_cast<unsigned long long>(p));
    for (double v : est.value) csv.cell(v);
    for (double v : est.standard_error) csv.cell(v);
    csv.cell(est.tail_bound).cell(static_cast<unsigned long long>(seed)).end_row();
    json pj{{"point", p}, {"y", ys[p]}, {"phi", est.value}, {"se", est.standard_error}, {"tail_warning", est.tail_warning}};
    if (model->poisson_solution) {
      std::vector<double> exact(dims.n);
      (*model->poisson_solution)(0.0, x, mu, ys[p], exact);
      pj["analytic"] = exact;
    }
    points.push_back(pj);
  }
  Outcome o;
  o.files.emplace_back("phi.csv", csv.str());
  o.results["s_max"] = pc.s_max;
  o.results["bbar"] = bbar_json;
  o.results["points"] = points;
  if (model->poisson_solution && model->averaged_drift) {
    std::vector<ResidualPoint> rp;
    for (const auto& y : ys) rp.push_back({0.0, x, mu_cloud, y});
    const double residual = residual_check(*model, rp, fd_step);
    o.results["residual"] = residual;
    out << "generator residual " << format_double(residual) << "\n";
  }
  out << "estimated Phi at " << ys.size() << " points (s_max " << format_double(pc.s_max) << ")\n";
  return o;
}

Outcome cmd_simulate(const Config& cfg, const CommonOptions& opts, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  StrongErrorConfig run = read_run(r, opts.workers);
  run.particles = r.count("simulate", "particles");
  run.replicates = std::max<std::size_t>(2, r.count("simulate", "replicates"));
  const std::size_t replicates = r.count("simulate", "replicates");
  const double epsilon = r.real("simulate", "epsilon");
  const std::uint64_t seed = r.u64("run", "seed");
  if (replicates == 0) problems.push_back("simulate.replicates must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) problems.push_back("simulate.epsilon must lie in (0, 1)");
  collect(problems, [&] { run.validate(validation_dims(model, run)); });
  finish_validation(r, problems);

  const auto& dims = model->dims;
  const std::size_t coarse = static_cast<std::size_t>(std::round(run.horizon / run.slow_step));
  const std::size_t per = run.fine_per_step != 0 ? run.fine_per_step
                                                 : fine_steps_per_slow_step(run.slow_step, epsilon, model->beta);
  const TimeGrid grid{run.horizon, run.slow_step / static_cast<double>(per), (coarse / run.checkpoints) * per};
  const NoiseStream stream(seed);
  std::vector<SlowFastTrajectory> trajs(replicates);
  parallel_for(replicates, opts.workers, [&](std::size_t rep) {
    trajs[rep] = simulate_slowfast(*model, epsilon, grid, run.particles, static_cast<std::uint32_t>(rep), stream,
                                   run.init);
  });

  std::vector<std::string> header{"replicate", "t", "particle"};
  for (const auto& n : component_names("x", dims.n)) header.push_back(n);
  for (const auto& n : component_names("y", dims.m)) header.push_back(n);
  CsvWriter traj_csv(header);
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    for (const auto& cp : trajs[rep].checkpoints) {
      for (std::size_t i = 0; i < cp.x.size(); ++i) {
        traj_csv.cell(static_cast<unsigned long long>(rep)).cell(cp.t).cell(static_cast<unsigned long long>(i));
        for (double v : cp.x.row(i)) traj_csv.cell(v);
        for (double v : cp.y.row(i)) traj_csv.cell(v);
        traj_csv.end_row();
      }
    }
  }
  CsvWriter moments_csv({"t", "m2_x", "m4_x", "m2_y", "m4_y"});
  const double inv = 1.0 / static_cast<double>(replicates);
  for (std::size_t c = 0; c < trajs.front().moments.size(); ++c) {
    MomentRow m;
    for (std::size_t rep = 0; rep < replicates; ++rep) {
      const MomentRow& row = trajs[rep].moments[c];
      m.m2_x += row.m2_x * inv;
      m.m4_x += row.m4_x * inv;
      m.m2_y += row.m2_y * inv;
      m.m4_y += row.m4_y * inv;
    }
    moments_csv.cell(trajs.front().moments[c].t).cell(m.m2_x).cell(m.m4_x).cell(m.m2_y).cell(m.m4_y).end_row();
  }
  Outcome o;
  o.files.emplace_back("trajectory.csv", traj_csv.str());
  o.files.emplace_back("moments.csv", moments_csv.str());
  o.results["fine_step"] = grid.step;
  o.results["fine_steps"] = grid.steps();
  out << "simulated " << replicates << " replicate(s) of " << run.particles << " particles, fine step "
      << format_double(grid.step) << "\n";
  return o;
}

Outcome cmd_probe(const Config& cfg, const CommonOptions&, std::ostream& out) {
  Reader r(cfg);
  std::vector<std::string> problems;
  const auto model = read_model(r, problems);
  const std::size_t n_probes = r.count("probe", "n_probes");
  const std::uint64_t seed = r.u64("run", "seed");
  if (n_probes == 0) problems.push_back("probe.n_probes must be at least 1");
  finish_validation(r, problems);

  const ProbeReport rep = probe_assumptions(*model, n_probes, seed);
  const bool beta_ok = rep.beta_empirical >= model->beta * (1.0 - 1e-9);
  out << std::left << std::setw(20) << "quantity" << std::setw(24) << "value" << std::setw(12) << "claim"
      << "status\n";
  auto line = [&](const std::string& q, const std::string& v, const std::string& claim, const std::string& status) {
    out << std::left << std::setw(20) << q << std::setw(23) << v << ' ' << std::setw(11) << claim << ' ' << status
        << "\n";
  };
  line("model", model->id, "", "");
  line("n_probes", std::to_string(rep.n_probes), "", "");
  line("beta_empirical", format_double(rep.beta_empirical), ">= " + format_double(model->beta),
       beta_ok ? "ok" : "FAIL");
  line("growth_constant", format_double(rep.growth_constant), "finite", std::isfinite(rep.growth_constant) ? "ok" : "FAIL");
  line("lipschitz_constant", format_double(rep.lipschitz_constant), "finite",
       std::isfinite(rep.lipschitz_constant) ? "ok" : "FAIL");
  line("violation", rep.violated() ? "yes" : "no", "no", rep.violated() ? "FAIL" : "ok");

  CsvWriter csv({"quantity", "value", "seed"});
  const auto s = static_cast<unsigned long long>(seed);
  csv.cell("beta_claimed").cell(model->beta).cell(s).end_row();
  csv.cell("beta_empirical").cell(rep.beta_empirical).cell(s).end_row();
  csv.cell("growth_constant").cell(rep.growth_constant).cell(s).end_row();
  csv.cell("lipschitz_constant").cell(rep.lipschitz_constant).cell(s).end_row();
  csv.cell("violation").cell(rep.violated() ? 1 : 0).cell(s).end_row();
  Outcome o;
  o.files.emplace_back("probe.csv", csv.str());
  o.results["beta_claimed"] = model->beta;
  o.results["beta_empirical"] = rep.beta_empirical;
  o.results["growth_constant"] = rep.growth_constant;
  o.results["lipschitz_constant"] = rep.lipschitz_constant;
  o.results["violation"] = rep.violated();
  if (rep.violated()) {
    const auto& v = *rep.violation;
    o.results["violating_probe"] = {{"t", v.t},       {"x", v.x},   {"y1", v.y1},
                                    {"y2", v.y2},     {"mu", v.measure_atoms}, {"dissipation", v.dissipation}};
  }
  return o;
}

void error_record(std::ostream& err, std::string_view kind, int code, const std::vector<std::string>& messages) {
  const json j{{"error", kind}, {"exit_code", code}, {"messages", messages}};
  err << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Slow-fast McKean-Vlasov particle simulator and averaging harness", "mvavg"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  using Handler = Outcome (*)(const Config&, const CommonOptions&, std::ostream&);
  struct Command {
    const char* name;
    const char* help;
    Handler handler;
  };
  const Command commands[] = {
      {"converge", "strong error over an epsilon grid and the fitted rate", cmd_converge},
      {"diagnostics", "moment, Holder, auxiliary-process and ergodicity diagnostics", cmd_diagnostics},
      {"ergodicity", "decay of the ergodic average and frozen-equation contraction", cmd_ergodicity},
      {"poisson", "Monte Carlo Poisson solution and generator residual", cmd_poisson},
      {"simulate", "one slow-fast run with checkpointed clouds and moments", cmd_simulate},
      {"probe", "random probing of dissipativity, growth and Lipschitz constants", cmd_probe},
  };
  CommonOptions opts;
  std::uint64_t seed_value = 0;
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config_path, "config file (sections of key = value)");
    sub->add_option("--seed", seed_value, "override run.seed");
    sub->add_option("--workers", opts.workers, "worker threads (0: all cores); output does not depend on it");
    sub->add_option("--out", opts.out, "output directory (default $MVAVG_OUTPUT_DIR or mvavg-out)");
    sub->add_option("--model", opts.model, "override model.name");
    sub->add_option("--set", opts.sets, "override section.key=value (repeatable)");
    subs.push_back(sub);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_record(err, "usage", kExitUsage, {e.what()});
    return kExitUsage;
  }

  std::size_t chosen = 0;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) chosen = i;
  CLI::App* sub = subs[chosen];
  if (sub->count("--seed") > 0) opts.seed = seed_value;

  try {
    const Config cfg = effective_config(opts);
    Outcome outcome = commands[chosen].handler(cfg, opts, out);
    const fs::path dir = opts.out.empty() ? default_output_dir() : fs::path(opts.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    json files = json::array();
    for (const auto& [name, content] : outcome.files) {
      write_text_file(dir / name, content);
      files.push_back(name);
    }
    Reader seed_reader(cfg);
    json meta{{"tool", "mvavg"},
              {"version", kVersion},
              {"subcommand", commands[chosen].name},
              {"seed", seed_reader.u64("run", "seed")},
              {"workers", opts.workers},
              {"config", config_json(cfg)},
              {"results", outcome.results},
              {"outputs", files}};
    write_text_file(dir / "run.cfg", cfg.to_text());
    write_text_file(dir / "run.json", meta.dump(2) + "\n");
    return kExitOk;
  } catch (const ConfigError& e) {
    error_record(err, "config", kExitConfig, e.problems());
    return kExitConfig;
  } catch (const IoError& e) {
    error_record(err, "io", kExitIo, {e.what()});
    return kExitIo;
  } catch (const StabilityError& e) {
    error_record(err, "config", kExitConfig, {e.what()});
    return kExitConfig;
  } catch (const std::exception& e) {
    error_record(err, "runtime", kExitRuntime, {e.what()});
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvavg::cli
