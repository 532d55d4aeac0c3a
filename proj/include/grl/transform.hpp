#pragma once

#include "grl/geometry.hpp"

namespace grl {

class Rng;

/// Similarity transform p -> scale * rotation * p + translation.
/// rotation is orthonormal with det +1 and scale is positive.
struct Transform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static Transform identity() { return {}; }
  static Transform from_yaw(double yaw, const Vec3& translation, double scale = 1.0);

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  /// Inverse map without forming the inverse matrix.
  Vec3 apply_inverse(const Vec3& p) const {
    return rotation.transpose() * (p - translation) / scale;
  }
  Transform inverse() const;
  /// (*this) after `inner`, i.e. p -> this(inner(p)).
  Transform compose(const Transform& inner) const;

  /// Throws InvalidArgument when the invariants do not hold within `tol`.
  void validate(double tol = 1e-9) const;

  bool operator==(const Transform&) const = default;
};

/// Uniformly distributed rotation (Shoemake quaternion method).
Mat3 random_rotation(Rng& rng);

}  // namespace grl
