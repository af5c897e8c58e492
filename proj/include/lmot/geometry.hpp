// Rigid-body transforms for ego and object motion, plus the 6D rotation
// representation consumed by the latent motion hyper-network.
//
// Conventions: rotations are 3x3 orthonormal matrices with det +1, translations
// in meters. All operations are pure; every type is an immutable value type.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>

#include "lmot/errors.hpp"

namespace lmot {

template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

/// Rigid-body transform: x' = R x + t. Validated at construction so that all
/// downstream operations can assume a proper rotation.
template <typename Scalar>
class Se3Transform {
 public:
  Se3Transform() : rotation_(Mat3<Scalar>::Identity()), translation_(Vec3<Scalar>::Zero()) {}

  Se3Transform(const Mat3<Scalar>& rotation, const Vec3<Scalar>& translation)
      : rotation_(rotation), translation_(translation) {
    const Scalar ortho_err = (rotation * rotation.transpose() - Mat3<Scalar>::Identity())
                                 .cwiseAbs()
                                 .maxCoeff();
    const Scalar det_err = std::abs(rotation.determinant() - Scalar(1));
    if (ortho_err > Scalar(1e-9) || det_err > Scalar(1e-9)) {
      std::ostringstream os;
      os << "rotation not orthonormal with det +1 (ortho err " << ortho_err << ", det err "
         << det_err << ")";
      throw DegenerateRotationInput(os.str());
    }
  }

  static Se3Transform identity() { return Se3Transform(); }

  /// Rotation about the z axis by `angle` radians plus a translation.
  static Se3Transform rot_z(Scalar angle, const Vec3<Scalar>& translation = Vec3<Scalar>::Zero()) {
    const Scalar c = std::cos(angle), s = std::sin(angle);
    Mat3<Scalar> r;
    r << c, -s, Scalar(0), s, c, Scalar(0), Scalar(0), Scalar(0), Scalar(1);
    return Se3Transform(r, translation);
  }

  static Se3Transform translation_only(const Vec3<Scalar>& t) {
    return Se3Transform(Mat3<Scalar>::Identity(), t);
  }

  const Mat3<Scalar>& rotation() const { return rotation_; }
  const Vec3<Scalar>& translation() const { return translation_; }

  /// Heading of the rotation about z (atan2 of the first column's xy part).
  Scalar yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

  Vec3<Scalar> apply(const Vec3<Scalar>& p) const { return rotation_ * p + translation_; }

 private:
  Mat3<Scalar> rotation_;
  Vec3<Scalar> translation_;
};

using Se3d = Se3Transform<double>;

/// First two columns of a rotation matrix, before orthonormalization.
template <typename Scalar>
struct Rot6 {
  Vec3<Scalar> a1;
  Vec3<Scalar> a2;
};

using Rot6d = Rot6<double>;

/// Ground-plane dynamics of one tracked object. `turn_rate` is interpreted as
/// radians per propagation interval (not per second), matching how the heading
/// delta enters the one-step motion transform; the default of zero gives the
/// constant-velocity model.
template <typename Scalar>
struct ObjectDynamicsT {
  Vec2<Scalar> velocity = Vec2<Scalar>::Zero();  // m/s, ground plane
  Scalar turn_rate = Scalar(0);                  // rad per interval
  Scalar dt = Scalar(0);                         // seconds

  void validate() const {
    if (!(dt > Scalar(0))) throw InvalidConfig("ObjectDynamics.dt must be > 0");
    if (!std::isfinite(turn_rate)) throw InvalidConfig("ObjectDynamics.turn_rate must be finite");
  }
};

using ObjectDynamics = ObjectDynamicsT<double>;

template <typename Scalar>
Se3Transform<Scalar> compose(const Se3Transform<Scalar>& a, const Se3Transform<Scalar>& b) {
  return Se3Transform<Scalar>(a.rotation() * b.rotation(),
                              a.rotation() * b.translation() + a.translation());
}

template <typename Scalar>
Se3Transform<Scalar> inverse(const Se3Transform<Scalar>& t) {
  Mat3<Scalar> rt = t.rotation().transpose();
  return Se3Transform<Scalar>(rt, -(rt * t.translation()));
}

/// One-step object motion: rotation about z by the turn rate, translation by
/// velocity integrated over dt. Zero turn rate yields an exactly-identity
/// rotation block.
template <typename Scalar>
Se3Transform<Scalar> object_motion_transform(const ObjectDynamicsT<Scalar>& d) {
  d.validate();
  return Se3Transform<Scalar>::rot_z(
      d.turn_rate, Vec3<Scalar>(d.velocity.x() * d.dt, d.velocity.y() * d.dt, Scalar(0)));
}

/// Reference-point update: r' = t_ego * t_obj * r in homogeneous coordinates.
template <typename Scalar>
Vec3<Scalar> update_reference(const Vec3<Scalar>& r, const Se3Transform<Scalar>& t_obj,
                              const Se3Transform<Scalar>& t_ego) {
  return t_ego.apply(t_obj.apply(r));
}

template <typename Scalar>
Rot6<Scalar> to_rot6d(const Se3Transform<Scalar>& t) {
  return Rot6<Scalar>{t.rotation().col(0), t.rotation().col(1)};
}

/// Gram-Schmidt orthonormalization of (a1, a2), completed by cross product.
/// The output is orthonormal for any non-degenerate input.
template <typename Scalar>
Mat3<Scalar> from_rot6d(const Rot6<Scalar>& r6) {
  constexpr Scalar kEps = Scalar(1e-9);
  const Scalar n1 = r6.a1.norm();
  if (n1 < kEps) throw DegenerateRotationInput("rot6d a1 has near-zero norm");
  const Vec3<Scalar> b1 = r6.a1 / n1;
  const Vec3<Scalar> rej = r6.a2 - b1.dot(r6.a2) * b1;
  const Scalar n2 = rej.norm();
  if (n2 < kEps) throw DegenerateRotationInput("rot6d a2 is parallel to a1 or near-zero");
  const Vec3<Scalar> b2 = rej / n2;
  Mat3<Scalar> r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return r;
}

/// Wrap an angle to (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  constexpr Scalar kPi = Scalar(3.14159265358979323846);
  a = std::fmod(a, Scalar(2) * kPi);
  if (a <= -kPi) a += Scalar(2) * kPi;
  if (a > kPi) a -= Scalar(2) * kPi;
  return a;
}

}  // namespace lmot
