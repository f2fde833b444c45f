#include "mvavg/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mvavg/csv.hpp"
#include "mvavg/noise.hpp"

namespace mvavg {

double MeasureView::integrate(const ScalarTest& fn) const {
  double out = 0.0;
  integrate([&fn](ConstVec z, MutVec o) { o[0] = fn(z); }, MutVec(&out, 1));
  return out;
}

EmpiricalMeasure::EmpiricalMeasure(ConstVec points, std::size_t dim,
                                   const std::vector<ScalarTest>* feature_functions)
    : points_(points), dim_(dim), count_(dim == 0 ? 0 : points.size() / dim), mean_(dim, 0.0) {
  if (dim == 0 || points.empty() || points.size() % dim != 0)
    throw std::invalid_argument("EmpiricalMeasure: need N >= 1 points of positive dimension");
  for (std::size_t i = 0; i < count_; ++i) {
    const auto row = points_.subspan(i * dim_, dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      mean_[k] += row[k];
      second_moment_ += row[k] * row[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(count_);
  for (double& v : mean_) v *= inv;
  second_moment_ *= inv;
  if (feature_functions != nullptr) {
    features_.assign(feature_functions->size(), 0.0);
    for (std::size_t i = 0; i < count_; ++i) {
      const auto row = points_.subspan(i * dim_, dim_);
      for (std::size_t f = 0; f < features_.size(); ++f) features_[f] += (*feature_functions)[f](row);
    }
    for (double& v : features_) v *= inv;
  }
}

void EmpiricalMeasure::integrate(const VectorTest& fn, MutVec out) const {
  std::vector<double> value(out.size());
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < count_; ++i) {
    fn(points_.subspan(i * dim_, dim_), value);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += value[k];
  }
  const double inv = 1.0 / static_cast<double>(count_);
  for (double& v : out) v *= inv;
}

ParticleCloud::ParticleCloud(std::size_t count, std::size_t dim, std::vector<double> points)
    : count_(count), dim_(dim), points_(std::move(points)) {
  if (count == 0 || dim == 0) throw std::invalid_argument("ParticleCloud: N and d must be >= 1");
  if (points_.size() != count * dim)
    throw std::invalid_argument("ParticleCloud: expected " + std::to_string(count * dim) +
                                " coordinates, got " + std::to_string(points_.size()));
  for (double v : points_)
    if (!std::isfinite(v)) throw std::invalid_argument("ParticleCloud: non-finite coordinate");
}

ParticleCloud ParticleCloud::dirac(ConstVec point) {
  return ParticleCloud(1, point.size(), std::vector<double>(point.begin(), point.end()));
}

ParticleCloud ParticleCloud::from_scalars(std::vector<double> values) {
  const std::size_t n = values.size();
  return ParticleCloud(n, 1, std::move(values));
}

ParticleCloud ParticleCloud::translated(ConstVec v) const {
  if (v.size() != dim_) throw std::invalid_argument("translated: dimension mismatch");
  std::vector<double> pts = points_;
  for (std::size_t i = 0; i < count_; ++i)
    for (std::size_t k = 0; k < dim_; ++k) pts[i * dim_ + k] += v[k];
  return ParticleCloud(count_, dim_, std::move(pts));
}

namespace {

void check_pair(const ParticleCloud& a, const ParticleCloud& b, const char* who) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(who) + ": clouds must have equal size (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.dim() != b.dim()) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

double sorted_w2(std::vector<double> u, std::vector<double> v) {
  std::sort(u.begin(), u.end());
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - v[i]) * (u[i] - v[i]);
  return acc / static_cast<double>(u.size());
}

}  // namespace

double w2_1d(const ParticleCloud& a, const ParticleCloud& b) {
  check_pair(a, b, "w2_1d");
  if (a.dim() != 1) throw std::invalid_argument("w2_1d: clouds must be one-dimensional");
  const auto da = a.data();
  const auto db = b.data();
  return std::sqrt(sorted_w2({da.begin(), da.end()}, {db.begin(), db.end()}));
}

std::vector<std::size_t> min_cost_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("min_cost_assignment: cost must be n x n");
  // Shortest augmenting path with potentials; 1-based internal indexing.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[col0] = 1;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

double w2_exact_small(const ParticleCloud& a, const ParticleCloud& b) {
  check_pair(a, b, "w2_exact_small");
  const std::size_t n = a.size();
  if (n > kExactAssignmentLimit)
    throw std::invalid_argument("w2_exact_small: N = " + std::to_string(n) + " exceeds " +
                                std::to_string(kExactAssignmentLimit) + "; use w2_sliced");
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < a.dim(); ++k) {
        const double diff = a.row(i)[k] - b.row(j)[k];
        d2 += diff * diff;
      }
      cost[i * n + j] = d2;
    }
  const auto assignment = min_cost_assignment(cost, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + assignment[i]];
  return std::sqrt(std::max(0.0, total / static_cast<double>(n)));
}

double w2_sliced(const ParticleCloud& a, const ParticleCloud& b, std::size_t n_projections,
                 std::uint64_t seed) {
  check_pair(a, b, "w2_sliced");
  if (n_projections == 0) throw std::invalid_argument("w2_sliced: need at least one projection");
  const std::size_t d = a.dim();
  if (d == 1) return w2_1d(a, b);
  const NoiseStream stream(seed);
  std::vector<double> direction(d), pa(a.size()), pb(b.size());
  double acc = 0.0;
  for (std::size_t p = 0; p < n_projections; ++p) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      direction[k] = stream.standard_normal(
          {NoiseRole::Probe, 0, 0, static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(k), 0});
      norm2 += direction[k] * direction[k];
    }
    if (norm2 == 0.0) {
      direction[0] = 1.0;
      norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t i = 0; i < a.size(); ++i) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        sa += a.row(i)[k] * direction[k] * inv;
        sb += b.row(i)[k] * direction[k] * inv;
      }
      pa[i] = sa;
      pb[i] = sb;
    }
    acc += sorted_w2(pa, pb);
  }
  return std::sqrt(acc / static_cast<double>(n_projections));
}

void write_cloud_csv(std::ostream& os, const ParticleCloud& cloud) {
  std::vector<std::string> header{"particle"};
  for (auto& name : component_names("z", cloud.dim())) header.push_back(std::move(name));
  CsvWriter csv(std::move(header));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    csv.cell(static_cast<unsigned long long>(i));
    for (double v : cloud.row(i)) csv.cell(v);
    csv.end_row();
  }
  os << csv.str();
}

}  // namespace mvavg
