#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mvavg/measure.hpp"

namespace mvavg {

struct Dimensions {
  std::size_t n = 1;   // slow state
  std::size_t m = 1;   // fast state
  std::size_t d1 = 1;  // slow noise
  std::size_t d2 = 1;  // fast noise
};

/// Coefficient depending on (t, x, mu, y): b, f, g, Phi.
using StateCoefficient = std::function<void(double t, ConstVec x, const MeasureView& mu, ConstVec y, MutVec out)>;
/// Coefficient depending on (t, x, mu): sigma, bbar.
using SlowCoefficient = std::function<void(double t, ConstVec x, const MeasureView& mu, MutVec out)>;

/// A slow-fast McKean-Vlasov system
///   dX = b(t,X,L_X,Y) dt + sigma(t,X,L_X) dW1
///   dY = eps^-1 f(t,X,L_X,Y) dt + eps^-1/2 g(t,X,L_X,Y) dW2.
/// Matrices (sigma: n x d1, g: m x d2) are row-major. All functions must be
/// pure; they are called concurrently.
struct CoefficientSet {
  std::string id;
  Dimensions dims;
  double beta = 0.0;  // dissipativity constant of the fast drift

  StateCoefficient slow_drift;      // b
  SlowCoefficient slow_diffusion;   // sigma
  StateCoefficient fast_drift;      // f
  StateCoefficient fast_diffusion;  // g

  std::optional<SlowCoefficient> averaged_drift;     // closed-form bbar
  std::optional<StateCoefficient> poisson_solution;  // closed-form Phi

  /// Scalar functions on R^n whose integrals against mu the coefficients
  /// read through MeasureView::features(). Computed once per particle step.
  std::vector<ScalarTest> measure_features;

  /// Throws std::invalid_argument on missing functions or bad dimensions.
  void validate() const;
};

struct LinearBenchmarkParams {
  double a1 = -1.0;
  double a2 = 0.5;
  double a3 = 1.0;
  double c1 = 0.5;
  double c2 = 0.25;
  double kappa = 2.0;
  double sigma_x = 0.3;
  double sigma_y = 1.0;
};

/// Scalar benchmark with Gaussian frozen dynamics:
///   b = a1 x + a2 mean(mu) + a3 y,  sigma = sigma_x,
///   f = -kappa (y - c1 x - c2 mean(mu)),  g = sigma_y.
/// beta = 2 kappa; bbar and Phi are available in closed form.
CoefficientSet linear_benchmark(const LinearBenchmarkParams& params);

enum class ConvolutionPair {
  Sine,         // b0(x,y) = sin(x+y),          f0(x,y) = -y + sin(x)
  CosineTanh,   // b0(x,y) = cos(x) tanh(y),     f0(x,y) = -2y + cos(x)/2
};

/// Mean-field convolution model b(x,mu,y) = int b0(x+z,y) mu(dz),
/// f(x,mu,y) = int f0(x+z,y) mu(dz), sigma = g = 1, n = m = 1.
CoefficientSet convolution_example(ConvolutionPair pair = ConvolutionPair::Sine);

struct ProbeViolation {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> y1;
  std::vector<double> y2;
  std::vector<double> measure_atoms;  // two atoms, row-major
  double dissipation = 0.0;           // 2<df,dy> + 3|dg|^2 divided by |dy|^2
};

struct ProbeReport {
  std::size_t n_probes = 0;
  double beta_empirical = 0.0;     // min over probes of -(2<df,dy> + 3|dg|^2)/|dy|^2
  double growth_constant = 0.0;    // max (|b| + |sigma|) / (1 + |x| + |y| + mu(|.|^2)^1/2)
  double lipschitz_constant = 0.0; // max finite-difference ratio over b, sigma, f, g
  std::optional<ProbeViolation> violation;  // first probe where dissipativity fails
  bool violated() const noexcept { return violation.has_value(); }
};

/// Random probing of the structural assumptions. Probe tuples: t ~ U[0,1],
/// x, y1, y2 ~ N(0, I), mu = (delta_z1 + delta_z2)/2 with z ~ N(0, I).
ProbeReport probe_assumptions(const CoefficientSet& model, std::size_t n_probes, std::uint64_t seed);

/// Euclidean / Frobenius norm.
double norm(ConstVec v);

}  // namespace mvavg
