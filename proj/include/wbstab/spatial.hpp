#pragma once

// 6D spatial vector algebra. Every 6-vector in this library is ordered
// angular-then-linear.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace wbstab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// World gravity, z up.
inline const Vec3 kGravity{0.0, 0.0, -9.81};

namespace spatial {

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

struct SpatialMotion {
  Vec3 angular = Vec3::Zero();
  Vec3 linear = Vec3::Zero();

  static SpatialMotion from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << angular, linear;
    return v;
  }

  SpatialMotion operator+(const SpatialMotion& o) const { return {angular + o.angular, linear + o.linear}; }
  SpatialMotion operator-(const SpatialMotion& o) const { return {angular - o.angular, linear - o.linear}; }
  SpatialMotion operator*(double s) const { return {angular * s, linear * s}; }
  SpatialMotion& operator+=(const SpatialMotion& o) {
    angular += o.angular;
    linear += o.linear;
    return *this;
  }
};

struct SpatialForce {
  Vec3 moment = Vec3::Zero();
  Vec3 force = Vec3::Zero();

  static SpatialForce from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << moment, force;
    return v;
  }

  SpatialForce operator+(const SpatialForce& o) const { return {moment + o.moment, force + o.force}; }
  SpatialForce operator-(const SpatialForce& o) const { return {moment - o.moment, force - o.force}; }
  SpatialForce operator*(double s) const { return {moment * s, force * s}; }
  SpatialForce& operator+=(const SpatialForce& o) {
    moment += o.moment;
    force += o.force;
    return *this;
  }
};

/// Power pairing <f, v> in watts.
inline double dot(const SpatialForce& f, const SpatialMotion& v) {
  return f.moment.dot(v.angular) + f.force.dot(v.linear);
}

/// Motion cross product v x m.
inline SpatialMotion cross(const SpatialMotion& v, const SpatialMotion& m) {
  return {v.angular.cross(m.angular), v.angular.cross(m.linear) + v.linear.cross(m.angular)};
}

/// Force cross product v x* f.
inline SpatialForce cross(const SpatialMotion& v, const SpatialForce& f) {
  return {v.angular.cross(f.moment) + v.linear.cross(f.force), v.angular.cross(f.force)};
}

/// Pose of a child frame B in a parent frame A: p_A = rotation * p_B + translation.
struct Transform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Transform identity() { return {}; }
  static Transform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Transform from_rotation(const Mat3& r) { return {r, Vec3::Zero()}; }
  static Transform from_quaternion(const Vec3& t, const Eigen::Quaterniond& q) {
    return {q.normalized().toRotationMatrix(), t};
  }

  Transform operator*(const Transform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  Transform inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Checks orthonormality and handedness of the rotation block.
  bool valid(double tol = 1e-10) const;
};

/// Expresses a B-coordinate motion vector in A coordinates.
inline SpatialMotion transform_motion(const Transform& X, const SpatialMotion& v) {
  const Vec3 w = X.rotation * v.angular;
  return {w, X.rotation * v.linear + X.translation.cross(w)};
}

/// Expresses a B-coordinate force vector in A coordinates.
inline SpatialForce transform_force(const Transform& X, const SpatialForce& f) {
  const Vec3 fa = X.rotation * f.force;
  return {X.rotation * f.moment + X.translation.cross(fa), fa};
}

/// Inverse of transform_motion: A coordinates to B coordinates.
inline SpatialMotion inverse_transform_motion(const Transform& X, const SpatialMotion& v) {
  return {X.rotation.transpose() * v.angular,
          X.rotation.transpose() * (v.linear - X.translation.cross(v.angular))};
}

/// Inverse of transform_force: A coordinates to B coordinates.
inline SpatialForce inverse_transform_force(const Transform& X, const SpatialForce& f) {
  return {X.rotation.transpose() * (f.moment - X.translation.cross(f.force)),
          X.rotation.transpose() * f.force};
}

/// 6x6 matrix form of transform_motion.
Mat6 motion_matrix(const Transform& X);
/// 6x6 matrix form of transform_force.
Mat6 force_matrix(const Transform& X);

/// Rigid-body inertia about the frame origin.
struct SpatialInertia {
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 rot_inertia = Mat3::Zero();  // about the frame origin

  /// Builds from the rotational inertia about the centre of mass.
  static SpatialInertia from_com_inertia(double mass, const Vec3& com, const Mat3& inertia_com);

  Mat3 inertia_about_com() const;
  Mat6 matrix() const;
  bool valid(double tol = 1e-12) const;

  /// Same body, expressed in the parent frame A where X is the pose of this frame in A.
  SpatialInertia transformed(const Transform& X) const;

  /// Sum of two inertias expressed about the same origin.
  SpatialInertia operator+(const SpatialInertia& o) const;
};

inline SpatialForce inertia_apply(const SpatialInertia& I, const SpatialMotion& a) {
  const Vec3 h = I.mass * I.com;
  return {I.rot_inertia * a.angular + h.cross(a.linear), I.mass * a.linear - h.cross(a.angular)};
}

/// SO(3) exponential of a rotation vector.
Mat3 exp_so3(const Vec3& w);
/// SO(3) logarithm; returns the rotation vector.
Vec3 log_so3(const Mat3& R);
/// Re-projects a near-rotation onto SO(3) through a unit quaternion.
Mat3 renormalize(const Mat3& R);

/// Roll (x), pitch (y), yaw (z) composed as Rz * Ry * Rx.
Mat3 rpy_to_rotation(double roll, double pitch, double yaw);
Vec3 rotation_to_rpy(const Mat3& R);

}  // namespace spatial
}  // namespace wbstab
