#include "mvavg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mvavg/noise.hpp"

namespace mvavg {

LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  const std::size_t n = x.size();
  if (y.size() != n || (!w.empty() && w.size() != n))
    throw std::invalid_argument("weighted_line_fit: length mismatch");
  if (n < 2) throw std::invalid_argument("weighted_line_fit: need at least two points");
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    if (!(wi >= 0.0) || !std::isfinite(wi)) throw std::invalid_argument("weighted_line_fit: bad weight");
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  if (!(sw > 0.0)) throw std::invalid_argument("weighted_line_fit: weights sum to zero");
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("weighted_line_fit: abscissae are all equal");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w.empty() ? 1.0 : w[i];
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += wi * r * r;
    }
    fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return fit;
}

Summary summarize(std::span<const double> samples) {
  Summary s;
  const std::size_t n = samples.size();
  if (n == 0) return s;
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(n);
  if (n < 2) return s;
  double var = 0.0;
  for (double v : samples) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(n - 1);
  s.standard_error = std::sqrt(var / static_cast<double>(n));
  return s;
}

SupEstimate sup_over_checkpoints(const ReplicateMatrix& m) {
  if (m.replicates == 0 || m.checkpoints == 0 || m.values.size() != m.replicates * m.checkpoints)
    throw std::invalid_argument("sup_over_checkpoints: malformed matrix");
  SupEstimate best;
  std::vector<double> column(m.replicates);
  for (std::size_t c = 0; c < m.checkpoints; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < m.replicates; ++r) sum += m.at(r, c);
    const double mean = sum / static_cast<double>(m.replicates);
    if (c == 0 || mean > best.value) {
      best.value = mean;
      best.argmax = c;
    }
  }
  for (std::size_t r = 0; r < m.replicates; ++r) column[r] = m.at(r, best.argmax);
  best.standard_error = summarize(column).standard_error;
  return best;
}

namespace {

void check_rate_inputs(std::span<const double> eps, std::span<const double> err, std::span<const double> se) {
  if (eps.size() != err.size() || eps.size() != se.size())
    throw std::invalid_argument("rate_fit: length mismatch");
  if (eps.size() < 3) throw std::invalid_argument("rate_fit: need at least three grid points");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw std::invalid_argument("rate_fit: epsilon must be positive");
    if (!(err[i] > 0.0))
      throw std::invalid_argument("rate_fit: error at index " + std::to_string(i) + " is not positive");
    if (!(se[i] >= 0.0)) throw std::invalid_argument("rate_fit: negative standard error");
  }
}

LineFit log_fit(std::span<const double> eps, std::span<const double> err, std::span<const double> se) {
  const std::size_t n = eps.size();
  std::vector<double> lx(n), ly(n), w(n);
  bool weighted = true;
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(eps[i]);
    ly[i] = std::log(err[i]);
    if (se[i] > 0.0)
      w[i] = (err[i] / se[i]) * (err[i] / se[i]);
    else
      weighted = false;
  }
  return weighted ? weighted_line_fit(lx, ly, w) : weighted_line_fit(lx, ly);
}

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

RateFit rate_fit(std::span<const double> epsilons, std::span<const double> errors,
                 std::span<const double> standard_errors) {
  check_rate_inputs(epsilons, errors, standard_errors);
  const LineFit line = log_fit(epsilons, errors, standard_errors);
  RateFit fit;
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.ci_low = line.slope - 1.96 * line.slope_se;
  fit.ci_high = line.slope + 1.96 * line.slope_se;
  return fit;
}

RateFit rate_fit(std::span<const double> epsilons, std::span<const double> errors,
                 std::span<const double> standard_errors, std::span<const ReplicateMatrix> samples,
                 std::size_t n_boot, std::uint64_t seed) {
  RateFit fit = rate_fit(epsilons, errors, standard_errors);
  if (n_boot == 0) return fit;
  if (samples.size() != epsilons.size()) throw std::invalid_argument("rate_fit: one replicate matrix per epsilon");
  const NoiseStream stream(seed);
  const std::size_t n = epsilons.size();
  std::vector<double> slopes;
  slopes.reserve(n_boot);
  std::vector<double> err(n), se(n);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const ReplicateMatrix& src = samples[i];
      ReplicateMatrix boot{src.replicates, src.checkpoints, std::vector<double>(src.values.size())};
      for (std::size_t r = 0; r < src.replicates; ++r) {
        const NoiseKey key{NoiseRole::Probe, 2, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(r),
                           0, static_cast<std::uint32_t>(b)};
        auto pick = static_cast<std::size_t>(stream.uniform(key) * static_cast<double>(src.replicates));
        pick = std::min(pick, src.replicates - 1);
        std::copy_n(src.values.begin() + static_cast<std::ptrdiff_t>(pick * src.checkpoints), src.checkpoints,
                    boot.values.begin() + static_cast<std::ptrdiff_t>(r * src.checkpoints));
      }
      const SupEstimate sup = sup_over_checkpoints(boot);
      err[i] = sup.value;
      se[i] = sup.standard_error;
    }
    bool usable = true;
    for (double e : err) usable = usable && e > 0.0;
    if (!usable) continue;
    slopes.push_back(log_fit(epsilons, err, se).slope);
  }
  if (slopes.empty()) return fit;
  fit.ci_low = percentile(slopes, 0.025);
  fit.ci_high = percentile(slopes, 0.975);
  fit.bootstrap_samples = slopes.size();
  return fit;
}

}  // namespace mvavg
