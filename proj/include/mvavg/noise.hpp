#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace mvavg {

enum class NoiseRole : std::uint8_t {
  Slow = 1,    // W^1, drives the slow component
  Fast = 2,    // W^2, drives the fast component
  Frozen = 3,  // drives frozen-equation trajectories
  Probe = 4,   // assumption probes, random projections, bootstrap
};

/// Address of a single standard normal draw. Two keys that compare equal
/// always produce the same value.
struct NoiseKey {
  NoiseRole role = NoiseRole::Slow;
  std::uint32_t grid = 0;  // tag of the time grid the increments live on
  std::uint32_t replicate = 0;
  std::uint32_t particle = 0;
  std::uint32_t component = 0;
  std::uint64_t step = 0;

  friend bool operator==(const NoiseKey&, const NoiseKey&) = default;
};

inline constexpr std::uint32_t kMaxGridTag = (1u << 24) - 1;
inline constexpr std::uint32_t kMaxReplicate = (1u << 16) - 1;
inline constexpr std::uint32_t kMaxComponent = (1u << 17) - 1;
inline constexpr std::uint64_t kMaxStep = 0xffffffffull;

/// Records every key drawn through a stream. Test hook for coupling checks.
class NoiseTrace {
 public:
  void record(const NoiseKey& key);
  std::vector<NoiseKey> keys() const;
  void clear();

 private:
  mutable std::mutex mutex_;
  std::vector<NoiseKey> keys_;
};

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Counter-based Gaussian source. Every draw is a pure function of
/// (seed, key); there is no sequential state, so draws can be requested in
/// any order from any number of threads.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Attach a trace that records every key consumed (nullptr detaches).
  void set_trace(std::shared_ptr<NoiseTrace> trace) { trace_ = std::move(trace); }

  double standard_normal(const NoiseKey& key) const;

  /// N(0, step) sample.
  double gaussian_increment(const NoiseKey& key, double step) const;

  /// Fills out[c] with the increment at key.component + c.
  void gaussian_increments(const NoiseKey& key, double step, std::span<double> out) const;

  /// Sum of the fine increments covering [window_begin, window_end). Both
  /// ends must lie on the fine grid of spacing fine_step; key.step is ignored.
  double aggregate_increments(const NoiseKey& key, double fine_step, double window_begin,
                              double window_end) const;

  /// Same, with the window given in fine-step indices [first, first + count).
  void aggregate_increments(const NoiseKey& key, double fine_step, std::uint64_t first,
                            std::uint64_t count, std::span<double> out) const;

  /// Uniform on (0, 1), addressed like the normals.
  double uniform(const NoiseKey& key) const;

 private:
  std::uint64_t seed_;
  std::shared_ptr<NoiseTrace> trace_;
};

}  // namespace mvavg
