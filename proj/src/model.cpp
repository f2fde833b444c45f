#include "mvavg/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mvavg/noise.hpp"

namespace mvavg {

double norm(ConstVec v) {
  double s = 0.0;
  for (double c : v) s += c * c;
  return std::sqrt(s);
}

void CoefficientSet::validate() const {
  std::string problems;
  if (dims.n == 0 || dims.m == 0 || dims.d1 == 0 || dims.d2 == 0) problems += " dimensions must be positive;";
  if (!(beta > 0.0) || !std::isfinite(beta)) problems += " beta must be positive;";
  if (!slow_drift) problems += " missing slow drift b;";
  if (!slow_diffusion) problems += " missing slow diffusion sigma;";
  if (!fast_drift) problems += " missing fast drift f;";
  if (!fast_diffusion) problems += " missing fast diffusion g;";
  if (!problems.empty()) throw std::invalid_argument("model '" + id + "':" + problems);
}

CoefficientSet linear_benchmark(const LinearBenchmarkParams& p) {
  for (double v : {p.a1, p.a2, p.a3, p.c1, p.c2, p.kappa, p.sigma_x, p.sigma_y})
    if (!std::isfinite(v)) throw std::invalid_argument("linear_benchmark: parameters must be finite");
  if (!(p.kappa > 0.0))
    throw std::invalid_argument("linear_benchmark: kappa must be > 0 (frozen equation not ergodic)");
  if (!(p.sigma_y > 0.0))
    throw std::invalid_argument("linear_benchmark: sigma_y must be > 0 (frozen equation not ergodic)");
  if (p.sigma_x < 0.0) throw std::invalid_argument("linear_benchmark: sigma_x must be >= 0");

  CoefficientSet model;
  model.id = "linear";
  model.dims = {1, 1, 1, 1};
  model.beta = 2.0 * p.kappa;
  model.slow_drift = [p](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = p.a1 * x[0] + p.a2 * mu.mean()[0] + p.a3 * y[0];
  };
  model.slow_diffusion = [p](double, ConstVec, const MeasureView&, MutVec out) { out[0] = p.sigma_x; };
  model.fast_drift = [p](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = -p.kappa * (y[0] - p.c1 * x[0] - p.c2 * mu.mean()[0]);
  };
  model.fast_diffusion = [p](double, ConstVec, const MeasureView&, ConstVec, MutVec out) {
    out[0] = p.sigma_y;
  };
  // The frozen equation is an OU process with stationary mean c1 x + c2 mean(mu).
  model.averaged_drift = [p](double, ConstVec x, const MeasureView& mu, MutVec out) {
    out[0] = (p.a1 + p.a3 * p.c1) * x[0] + (p.a2 + p.a3 * p.c2) * mu.mean()[0];
  };
  model.poisson_solution = [p](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = (p.a3 / p.kappa) * (y[0] - p.c1 * x[0] - p.c2 * mu.mean()[0]);
  };
  return model;
}

namespace {

// (int cos(x+z) mu(dz), int sin(x+z) mu(dz)) from the features (mu(cos), mu(sin)).
struct ShiftedTrig {
  double cos_part;
  double sin_part;
};

ShiftedTrig shifted_trig(double x, const MeasureView& mu) {
  double mc, ms;
  const auto feats = mu.features();
  if (feats.size() >= 2) {
    mc = feats[0];
    ms = feats[1];
  } else {
    mc = mu.integrate(ScalarTest([](ConstVec z) { return std::cos(z[0]); }));
    ms = mu.integrate(ScalarTest([](ConstVec z) { return std::sin(z[0]); }));
  }
  const double cx = std::cos(x), sx = std::sin(x);
  return {cx * mc - sx * ms, sx * mc + cx * ms};
}

}  // namespace

CoefficientSet convolution_example(ConvolutionPair pair) {
  CoefficientSet model;
  model.dims = {1, 1, 1, 1};
  model.measure_features = {[](ConstVec z) { return std::cos(z[0]); },
                            [](ConstVec z) { return std::sin(z[0]); }};
  model.slow_diffusion = [](double, ConstVec, const MeasureView&, MutVec out) { out[0] = 1.0; };
  model.fast_diffusion = [](double, ConstVec, const MeasureView&, ConstVec, MutVec out) { out[0] = 1.0; };

  switch (pair) {
    case ConvolutionPair::Sine:
      model.id = "convolution-sine";
      model.beta = 2.0;
      // int sin(x+z+y) mu(dz)
      model.slow_drift = [](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
        out[0] = shifted_trig(x[0] + y[0], mu).sin_part;
      };
      model.fast_drift = [](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
        out[0] = -y[0] + shifted_trig(x[0], mu).sin_part;
      };
      break;
    case ConvolutionPair::CosineTanh:
      model.id = "convolution-cosine-tanh";
      model.beta = 4.0;
      model.slow_drift = [](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
        out[0] = std::tanh(y[0]) * shifted_trig(x[0], mu).cos_part;
      };
      model.fast_drift = [](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
        out[0] = -2.0 * y[0] + 0.5 * shifted_trig(x[0], mu).cos_part;
      };
      break;
  }
  return model;
}

namespace {

class ProbeSampler {
 public:
  ProbeSampler(std::uint64_t seed, std::uint32_t probe) : stream_(seed), probe_(probe) {}
  double normal() { return stream_.standard_normal(next()); }
  double uniform() { return stream_.uniform(next()); }
  void normals(std::vector<double>& v) {
    for (double& c : v) c = normal();
  }

 private:
  NoiseKey next() { return {NoiseRole::Probe, 1, 0, probe_, slot_++, 0}; }
  NoiseStream stream_;
  std::uint32_t probe_;
  std::uint32_t slot_ = 0;
};

struct Evaluation {
  std::vector<double> b, sigma, f, g;
};

Evaluation evaluate(const CoefficientSet& model, double t, ConstVec x, const ParticleCloud& cloud,
                    ConstVec y) {
  const auto& d = model.dims;
  Evaluation e{std::vector<double>(d.n), std::vector<double>(d.n * d.d1), std::vector<double>(d.m),
               std::vector<double>(d.m * d.d2)};
  const auto mu = cloud.view(&model.measure_features);
  model.slow_drift(t, x, mu, y, e.b);
  model.slow_diffusion(t, x, mu, e.sigma);
  model.fast_drift(t, x, mu, y, e.f);
  model.fast_diffusion(t, x, mu, y, e.g);
  return e;
}

double distance(ConstVec a, ConstVec b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

ProbeReport probe_assumptions(const CoefficientSet& model, std::size_t n_probes, std::uint64_t seed) {
  model.validate();
  if (n_probes == 0) throw std::invalid_argument("probe_assumptions: n_probes must be >= 1");
  const auto& d = model.dims;
  constexpr double kPerturbation = 1e-3;

  ProbeReport report;
  report.n_probes = n_probes;
  report.beta_empirical = std::numeric_limits<double>::infinity();

  std::vector<double> x(d.n), y1(d.m), y2(d.m), atoms(2 * d.n);
  std::vector<double> x2(d.n), y3(d.m), atoms2(2 * d.n), noise_n(d.n), noise_m(d.m), noise_a(2 * d.n);
  for (std::size_t p = 0; p < n_probes; ++p) {
    ProbeSampler sampler(seed, static_cast<std::uint32_t>(p));
    const double t = sampler.uniform();
    sampler.normals(x);
    sampler.normals(y1);
    sampler.normals(y2);
    sampler.normals(atoms);
    const ParticleCloud mu(2, d.n, atoms);

    const Evaluation e1 = evaluate(model, t, x, mu, y1);
    const Evaluation e2 = evaluate(model, t, x, mu, y2);

    double inner = 0.0, dy2 = 0.0, dg2 = 0.0;
    for (std::size_t k = 0; k < d.m; ++k) {
      inner += (e1.f[k] - e2.f[k]) * (y1[k] - y2[k]);
      dy2 += (y1[k] - y2[k]) * (y1[k] - y2[k]);
    }
    for (std::size_t k = 0; k < e1.g.size(); ++k) dg2 += (e1.g[k] - e2.g[k]) * (e1.g[k] - e2.g[k]);
    if (dy2 > 0.0) {
      const double dissipation = (2.0 * inner + 3.0 * dg2) / dy2;
      report.beta_empirical = std::min(report.beta_empirical, -dissipation);
      if (dissipation >= 0.0 && !report.violation) {
        report.violation = ProbeViolation{t, x, y1, y2, atoms, dissipation};
      }
    }

    const double scale = 1.0 + norm(x) + norm(y1) + std::sqrt(mu.view().second_moment());
    report.growth_constant = std::max(report.growth_constant, (norm(e1.b) + norm(e1.sigma)) / scale);

    // Finite-difference Lipschitz ratio against a nearby tuple.
    const double t2 = std::clamp(t + kPerturbation * (2.0 * sampler.uniform() - 1.0), 0.0, 1.0);
    sampler.normals(noise_n);
    sampler.normals(noise_m);
    sampler.normals(noise_a);
    for (std::size_t k = 0; k < d.n; ++k) x2[k] = x[k] + kPerturbation * noise_n[k];
    for (std::size_t k = 0; k < d.m; ++k) y3[k] = y1[k] + kPerturbation * noise_m[k];
    for (std::size_t k = 0; k < atoms.size(); ++k) atoms2[k] = atoms[k] + kPerturbation * noise_a[k];
    const ParticleCloud mu2(2, d.n, atoms2);
    const Evaluation e3 = evaluate(model, t2, x2, mu2, y3);
    const double denom = std::abs(t2 - t) + distance(x, x2) + distance(y1, y3) + w2_exact_small(mu, mu2);
    if (denom > 0.0) {
      const double slow = distance(e1.b, e3.b) + distance(e1.sigma, e3.sigma);
      const double fast = distance(e1.f, e3.f) + distance(e1.g, e3.g);
      report.lipschitz_constant = std::max(report.lipschitz_constant, std::max(slow, fast) / denom);
    }
  }
  return report;
}

}  // namespace mvavg
