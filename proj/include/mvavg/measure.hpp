#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace mvavg {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

/// Scalar test function on R^d.
using ScalarTest = std::function<double(ConstVec)>;
/// Vector test function on R^d, writing into out.
using VectorTest = std::function<void(ConstVec, MutVec)>;

/// Read-only handle over a probability measure on R^d. Coefficients see the
/// law of the slow component only through this interface.
class MeasureView {
 public:
  virtual ~MeasureView() = default;

  virtual std::size_t dim() const = 0;
  virtual ConstVec mean() const = 0;
  /// mu(|.|^2)
  virtual double second_moment() const = 0;
  /// out = integral of fn against the measure.
  virtual void integrate(const VectorTest& fn, MutVec out) const = 0;
  double integrate(const ScalarTest& fn) const;

  /// Integrals of the model-declared feature functions, precomputed once per
  /// snapshot. Empty when the view was built without features.
  virtual ConstVec features() const = 0;
};

/// Equal-weight empirical measure over the rows of a row-major N x d array.
/// Non-owning; the points must outlive the view.
class EmpiricalMeasure final : public MeasureView {
 public:
  EmpiricalMeasure(ConstVec points, std::size_t dim,
                   const std::vector<ScalarTest>* feature_functions = nullptr);

  std::size_t dim() const override { return dim_; }
  std::size_t size() const { return count_; }
  ConstVec mean() const override { return mean_; }
  double second_moment() const override { return second_moment_; }
  void integrate(const VectorTest& fn, MutVec out) const override;
  using MeasureView::integrate;
  ConstVec features() const override { return features_; }

 private:
  ConstVec points_;
  std::size_t dim_;
  std::size_t count_;
  std::vector<double> mean_;
  double second_moment_ = 0.0;
  std::vector<double> features_;
};

/// N equal-weight points in R^d, stored row-major. Immutable.
class ParticleCloud {
 public:
  ParticleCloud() = default;
  ParticleCloud(std::size_t count, std::size_t dim, std::vector<double> points);

  static ParticleCloud dirac(ConstVec point);
  /// One particle per entry, d = 1.
  static ParticleCloud from_scalars(std::vector<double> values);

  std::size_t size() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  ConstVec row(std::size_t i) const { return ConstVec(points_).subspan(i * dim_, dim_); }
  ConstVec data() const noexcept { return points_; }

  EmpiricalMeasure view(const std::vector<ScalarTest>* features = nullptr) const {
    return EmpiricalMeasure(points_, dim_, features);
  }

  /// Shift every particle by v.
  ParticleCloud translated(ConstVec v) const;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> points_;
};

/// Exact W2 between equal-size one-dimensional clouds (sorted coupling).
double w2_1d(const ParticleCloud& a, const ParticleCloud& b);

inline constexpr std::size_t kExactAssignmentLimit = 12;

/// Exact W2 by minimum-cost perfect matching on squared distances.
/// Sizes above kExactAssignmentLimit are rejected.
double w2_exact_small(const ParticleCloud& a, const ParticleCloud& b);

/// Sliced W2: root-mean-square of 1-D W2 over random unit directions.
double w2_sliced(const ParticleCloud& a, const ParticleCloud& b, std::size_t n_projections,
                 std::uint64_t seed);

/// Minimum-cost assignment (Hungarian method) on a square cost matrix,
/// row-major. Returns column assigned to each row.
std::vector<std::size_t> min_cost_assignment(std::span<const double> cost, std::size_t n);

/// One row per particle: "i,z1,...,zd" after a header row.
void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud);

}  // namespace mvavg
