#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mvavg/model.hpp"
#include "mvavg/noise.hpp"

namespace mvavg {

struct PhiConfig {
  double s_max = 5.0;
  double h_frozen = 0.002;
  std::size_t n_traj = 10000;
  double tolerance = 1e-4;  // relative size of the truncated tail
  unsigned workers = 1;
  std::uint32_t replicate = 0;  // frozen-noise slot of this estimate
};

struct PhiEstimate {
  std::vector<double> value;
  std::vector<double> standard_error;
  double s_max = 0.0;
  std::size_t n_traj = 0;
  /// |b(t,x,mu,y) - bbar| e^{-beta s_max / 2} (2 / beta): the exponential
  /// envelope of the integrand integrated beyond s_max.
  double tail_bound = 0.0;
  bool tail_warning = false;  // s_max shorter than (2/beta) ln(1/tolerance)
};

/// (2 / beta) ln(1 / tolerance).
double minimum_phi_horizon(double beta, double tolerance);

/// Monte Carlo estimate of Phi(t,x,mu,y) = int_0^inf E b(t,x,mu,Y_s^y) - bbar ds,
/// truncated at s_max, trapezoid rule on the frozen grid.
PhiEstimate estimate_phi(const CoefficientSet& model, double t, ConstVec x, const MeasureView& mu, ConstVec y,
                         const PhiConfig& config, const NoiseStream& stream, ConstVec bbar);

struct ResidualPoint {
  double t = 0.0;
  std::vector<double> x;
  ParticleCloud mu;
  std::vector<double> y;
};

/// max over points and components of |L2 Phi + b - bbar|, with the generator
/// L2 = <f, d_y> + 1/2 Tr[g g^T d_yy] applied by central finite differences.
/// phi defaults to the model's closed-form Poisson solution; bbar is always
/// the closed-form averaged drift.
double residual_check(const CoefficientSet& model, std::span<const ResidualPoint> points, double fd_step,
                      const StateCoefficient* phi = nullptr);

}  // namespace mvavg
