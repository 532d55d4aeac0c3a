#include "grl/transform.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "grl/error.hpp"
#include "grl/rng.hpp"

namespace grl {

Transform Transform::from_yaw(double yaw, const Vec3& translation, double scale) {
  Transform t;
  t.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  t.translation = translation;
  t.scale = scale;
  return t;
}

Transform Transform::inverse() const {
  Transform inv;
  inv.rotation = rotation.transpose();
  inv.scale = 1.0 / scale;
  inv.translation = -(inv.rotation * translation) / scale;
  return inv;
}

Transform Transform::compose(const Transform& inner) const {
  Transform out;
  out.rotation = rotation * inner.rotation;
  out.scale = scale * inner.scale;
  out.translation = scale * (rotation * inner.translation) + translation;
  return out;
}

void Transform::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite() || !std::isfinite(scale)) {
    throw Error(ErrorKind::NonFiniteInput, "transform has non-finite entries");
  }
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw Error(ErrorKind::InvalidArgument, "rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > tol) {
    throw Error(ErrorKind::InvalidArgument, "rotation determinant is not +1");
  }
  if (!(scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "scale must be positive");
}

Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform() * 2.0 * std::numbers::pi;
  const double u3 = rng.uniform() * 2.0 * std::numbers::pi;
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  Eigen::Quaterniond q(b * std::cos(u3), a * std::sin(u2), a * std::cos(u2), b * std::sin(u3));
  return q.normalized().toRotationMatrix();
}

}  // namespace grl
