#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mvavg {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;  // from the weighted residuals; 0 for an exact fit
};

/// Weighted least squares y ~ intercept + slope x. Equal weights when w is empty.
LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

struct Summary {
  double mean = 0.0;
  double standard_error = 0.0;  // sample sd / sqrt(n); 0 when n < 2
};

Summary summarize(std::span<const double> samples);

/// Replicate-by-checkpoint matrix of per-replicate squared errors for one
/// epsilon. rows = replicates.
struct ReplicateMatrix {
  std::size_t replicates = 0;
  std::size_t checkpoints = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * checkpoints + c]; }
};

struct SupEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t argmax = 0;
};

/// max over checkpoints of the replicate mean, with the replicate standard
/// error at the maximising checkpoint.
SupEstimate sup_over_checkpoints(const ReplicateMatrix& m);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t bootstrap_samples = 0;  // 0: interval is slope +- 1.96 slope_se
};

/// Weighted least squares on (log eps, log error) with weights (error/se)^2.
/// Falls back to equal weights if any se is zero.
RateFit rate_fit(std::span<const double> epsilons, std::span<const double> errors,
                 std::span<const double> standard_errors);

/// As above; the 95% interval is a percentile bootstrap that resamples
/// replicates independently for each epsilon and recomputes the sup error.
RateFit rate_fit(std::span<const double> epsilons, std::span<const double> errors,
                 std::span<const double> standard_errors, std::span<const ReplicateMatrix> samples,
                 std::size_t n_boot, std::uint64_t seed);

}  // namespace mvavg
