#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvavg/model.hpp"

namespace mvavg::testing {

/// Scalar model (n = m = d1 = d2 = 1) from plain functions of (x, mean(mu), y).
struct ScalarFns {
  std::function<double(double, double, double)> b = [](double, double, double) { return 0.0; };
  std::function<double(double, double)> sigma = [](double, double) { return 0.0; };
  std::function<double(double, double, double)> f = [](double, double, double y) { return -y; };
  std::function<double(double, double, double)> g = [](double, double, double) { return 0.0; };
  double beta = 2.0;
  std::optional<std::function<double(double, double)>> bbar;
};

inline CoefficientSet scalar_model(const std::string& id, ScalarFns s) {
  CoefficientSet m;
  m.id = id;
  m.dims = {1, 1, 1, 1};
  m.beta = s.beta;
  m.slow_drift = [b = s.b](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = b(x[0], mu.mean()[0], y[0]);
  };
  m.slow_diffusion = [sg = s.sigma](double, ConstVec x, const MeasureView& mu, MutVec out) {
    out[0] = sg(x[0], mu.mean()[0]);
  };
  m.fast_drift = [f = s.f](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = f(x[0], mu.mean()[0], y[0]);
  };
  m.fast_diffusion = [g = s.g](double, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out) {
    out[0] = g(x[0], mu.mean()[0], y[0]);
  };
  if (s.bbar) {
    m.averaged_drift = [bb = *s.bbar](double, ConstVec x, const MeasureView& mu, MutVec out) {
      out[0] = bb(x[0], mu.mean()[0]);
    };
  }
  return m;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace mvavg::testing
