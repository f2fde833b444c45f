#include "mvavg/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mvavg {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;
constexpr std::uint32_t kUniformFlag = 0x80000000u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

void check_key(const NoiseKey& key) {
  if (key.grid > kMaxGridTag || key.replicate > kMaxReplicate ||
      key.component > kMaxComponent || key.step > kMaxStep) {
    std::ostringstream os;
    os << "noise key out of range (grid=" << key.grid << ", replicate=" << key.replicate
       << ", component=" << key.component << ", step=" << key.step << ")";
    throw std::out_of_range(os.str());
  }
}

std::array<std::uint32_t, 4> counter_of(const NoiseKey& key) {
  return {static_cast<std::uint32_t>(key.step), key.particle,
          key.replicate | ((key.component >> 1) << 16),
          (static_cast<std::uint32_t>(key.role) << 24) | key.grid};
}

std::array<std::uint32_t, 2> key_of(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// (0,1), never 0 so the logarithm is finite.
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// Box-Muller pair for the component block of the key.
inline std::array<double, 2> normal_pair(std::uint64_t seed, const NoiseKey& key) {
  const auto r = philox4x32(counter_of(key), key_of(seed));
  const double u1 = to_unit(r[0], r[1]);
  const double u2 = to_unit(r[2], r[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

void NoiseTrace::record(const NoiseKey& key) {
  std::lock_guard lock(mutex_);
  keys_.push_back(key);
}

std::vector<NoiseKey> NoiseTrace::keys() const {
  std::lock_guard lock(mutex_);
  return keys_;
}

void NoiseTrace::clear() {
  std::lock_guard lock(mutex_);
  keys_.clear();
}

double NoiseStream::standard_normal(const NoiseKey& key) const {
  check_key(key);
  if (trace_) trace_->record(key);
  const auto pair = normal_pair(seed_, key);
  return pair[key.component & 1u];
}

double NoiseStream::gaussian_increment(const NoiseKey& key, double step) const {
  if (!(step > 0.0)) throw std::invalid_argument("gaussian_increment: step must be positive");
  return std::sqrt(step) * standard_normal(key);
}

void NoiseStream::gaussian_increments(const NoiseKey& key, double step,
                                      std::span<double> out) const {
  if (!(step > 0.0)) throw std::invalid_argument("gaussian_increments: step must be positive");
  const double scale = std::sqrt(step);
  NoiseKey k = key;
  std::size_t c = 0;
  while (c < out.size()) {
    k.component = key.component + static_cast<std::uint32_t>(c);
    check_key(k);
    const auto pair = normal_pair(seed_, k);
    const unsigned slot = k.component & 1u;
    if (trace_) trace_->record(k);
    out[c++] = scale * pair[slot];
    if (slot == 0 && c < out.size()) {
      ++k.component;
      if (trace_) trace_->record(k);
      out[c++] = scale * pair[1];
    }
  }
}

double NoiseStream::aggregate_increments(const NoiseKey& key, double fine_step,
                                         double window_begin, double window_end) const {
  if (!(fine_step > 0.0)) throw std::invalid_argument("aggregate_increments: fine step must be positive");
  if (!(window_end > window_begin) || window_begin < 0.0)
    throw std::invalid_argument("aggregate_increments: empty or negative window");
  const double b = window_begin / fine_step;
  const double e = window_end / fine_step;
  const double rb = std::round(b);
  const double re = std::round(e);
  const double tol = 1e-9 * std::max(1.0, re);
  if (std::abs(b - rb) > tol || std::abs(e - re) > tol) {
    std::ostringstream os;
    os << "aggregate_increments: window [" << window_begin << ", " << window_end
       << ") is not aligned with fine step " << fine_step;
    throw std::invalid_argument(os.str());
  }
  double sum = 0.0;
  aggregate_increments(key, fine_step, static_cast<std::uint64_t>(rb),
                       static_cast<std::uint64_t>(re - rb), std::span<double>(&sum, 1));
  return sum;
}

void NoiseStream::aggregate_increments(const NoiseKey& key, double fine_step,
                                       std::uint64_t first, std::uint64_t count,
                                       std::span<double> out) const {
  if (count == 0) throw std::invalid_argument("aggregate_increments: empty window");
  for (double& v : out) v = 0.0;
  std::vector<double> buffer(out.size());
  NoiseKey k = key;
  for (std::uint64_t j = first; j < first + count; ++j) {
    k.step = j;
    gaussian_increments(k, fine_step, buffer);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += buffer[c];
  }
}

double NoiseStream::uniform(const NoiseKey& key) const {
  check_key(key);
  if (trace_) trace_->record(key);
  auto ctr = counter_of(key);
  ctr[3] |= kUniformFlag;
  const auto r = philox4x32(ctr, key_of(seed_));
  return (key.component & 1u) ? to_unit(r[2], r[3]) : to_unit(r[0], r[1]);
}

}  // namespace mvavg
