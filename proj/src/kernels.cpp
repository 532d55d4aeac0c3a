#include "grl/kernels.hpp"

#include <limits>


namespace grl::kernels {

namespace {

double sum_in_order(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

namespace serial {

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start) {
  const std::size_t n = points.size();
  std::vector<std::size_t> chosen;
  if (m == 0 || n == 0) return chosen;
  chosen.reserve(m);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t it = 0; it < m; ++it) {
    chosen.push_back(current);
    const Vec3 c = points[current];
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (points[i] - c).squaredNorm();
      if (d < min_d[i]) min_d[i] = d;
      if (min_d[i] > best) {
        best = min_d[i];
        best_i = i;
      }
    }
    current = best_i;
  }
  return chosen;
}

NearestNeighbors nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> refs) {
  NearestNeighbors out;
  out.index.resize(queries.size());
  out.sq_distance.resize(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < refs.size(); ++j) {
      const double d = (queries[q] - refs[j]).squaredNorm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    out.index[q] = best_j;
    out.sq_distance[q] = best;
  }
  return out;
}

double chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  const NearestNeighbors xy = nearest_neighbors(x, y);
  const NearestNeighbors yx = nearest_neighbors(y, x);
  return sum_in_order(xy.sq_distance) / static_cast<double>(x.size()) +
         sum_in_order(yx.sq_distance) / static_cast<double>(y.size());
}

}  // namespace serial

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start) {
  const std::size_t n = points.size();
  std::vector<std::size_t> chosen;
  if (m == 0 || n == 0) return chosen;
  chosen.reserve(m);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  const auto ni = static_cast<std::ptrdiff_t>(n);
  for (std::size_t it = 0; it < m; ++it) {
    chosen.push_back(current);
    const Vec3 c = points[current];
    double best = -1.0;
    std::size_t best_i = 0;
#pragma omp parallel
    {
      double local_best = -1.0;
      std::size_t local_i = 0;
#pragma omp for schedule(static) nowait
      for (std::ptrdiff_t i = 0; i < ni; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const double d = (points[u] - c).squaredNorm();
        if (d < min_d[u]) min_d[u] = d;
        if (min_d[u] > local_best) {
          local_best = min_d[u];
          local_i = u;
        }
      }
#pragma omp critical
      {
        if (local_best > best || (local_best == best && local_i < best_i)) {
          best = local_best;
          best_i = local_i;
        }
      }
    }
    current = best_i;
  }
  return chosen;
}

NearestNeighbors nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> refs) {
  NearestNeighbors out;
  out.index.resize(queries.size());
  out.sq_distance.resize(queries.size());
  const auto nq = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < nq; ++q) {
    const Vec3 p = queries[static_cast<std::size_t>(q)];
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < refs.size(); ++j) {
      const double d = (p - refs[j]).squaredNorm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    out.index[static_cast<std::size_t>(q)] = best_j;
    out.sq_distance[static_cast<std::size_t>(q)] = best;
  }
  return out;
}

double chamfer(std::span<const Vec3> x, std::span<const Vec3> y) {
  const NearestNeighbors xy = nearest_neighbors(x, y);
  const NearestNeighbors yx = nearest_neighbors(y, x);
  return sum_in_order(xy.sq_distance) / static_cast<double>(x.size()) +
         sum_in_order(yx.sq_distance) / static_cast<double>(y.size());
}

}  // namespace grl::kernels
