#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "grl/geometry.hpp"

// Hot loops of the pipeline. Each kernel has an OpenMP version and a plain
// serial reference in `serial::`; both produce bit-identical results for any
// thread count (reductions are done in index order after the parallel part).
namespace grl::kernels {

struct NearestNeighbors {
  std::vector<std::size_t> index;   // per query, lowest index among equidistant refs
  std::vector<double> sq_distance;  // per query
};

/// Greedy farthest point sampling from `start`; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start);

NearestNeighbors nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> refs);

/// mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2
double chamfer(std::span<const Vec3> x, std::span<const Vec3> y);

namespace serial {

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points, std::size_t m,
                                               std::size_t start);
NearestNeighbors nearest_neighbors(std::span<const Vec3> queries, std::span<const Vec3> refs);
double chamfer(std::span<const Vec3> x, std::span<const Vec3> y);

}  // namespace serial

}  // namespace grl::kernels
