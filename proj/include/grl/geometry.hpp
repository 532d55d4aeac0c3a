#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace grl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PointCloud = std::vector<Vec3>;

/// Axis-aligned bounding box.
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool empty() const { return (min.array() > max.array()).any(); }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }

  /// Strict overlap; boxes that only touch do not overlap.
  bool overlaps(const Aabb& other) const {
    return (min.array() < other.max.array()).all() && (other.min.array() < max.array()).all();
  }
};

inline Aabb bounding_box(std::span<const Vec3> points) {
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  return box;
}

inline Vec3 centroid(std::span<const Vec3> points) {
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : points) sum += p;
  return points.empty() ? sum : Vec3(sum / static_cast<double>(points.size()));
}

}  // namespace grl
