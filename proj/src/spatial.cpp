#include "wbstab/spatial.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace wbstab::spatial {

bool Transform::valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Mat6 motion_matrix(const Transform& X) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = X.rotation;
  m.bottomRightCorner<3, 3>() = X.rotation;
  m.bottomLeftCorner<3, 3>() = skew(X.translation) * X.rotation;
  return m;
}

Mat6 force_matrix(const Transform& X) {
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = X.rotation;
  m.bottomRightCorner<3, 3>() = X.rotation;
  m.topRightCorner<3, 3>() = skew(X.translation) * X.rotation;
  return m;
}

namespace {
Mat3 shift_term(double mass, const Vec3& c) {
  return mass * (c.squaredNorm() * Mat3::Identity() - c * c.transpose());
}
}  // namespace

SpatialInertia SpatialInertia::from_com_inertia(double mass, const Vec3& com, const Mat3& inertia_com) {
  return {mass, com, inertia_com + shift_term(mass, com)};
}

Mat3 SpatialInertia::inertia_about_com() const { return rot_inertia - shift_term(mass, com); }

Mat6 SpatialInertia::matrix() const {
  const Mat3 h = skew(mass * com);
  Mat6 m;
  m << rot_inertia, h, -h, mass * Mat3::Identity();
  return m;
}

bool SpatialInertia::valid(double tol) const {
  if (!(mass > 0.0) || !com.allFinite() || !rot_inertia.allFinite()) return false;
  if ((rot_inertia - rot_inertia.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, rot_inertia.norm()))
    return false;
  Mat3 central = inertia_about_com();
  central = 0.5 * (central + central.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat3> eig(central, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, central.norm());
}

SpatialInertia SpatialInertia::transformed(const Transform& X) const {
  const Vec3 c = X.apply(com);
  const Mat3 central = X.rotation * inertia_about_com() * X.rotation.transpose();
  return {mass, c, central + shift_term(mass, c)};
}

SpatialInertia SpatialInertia::operator+(const SpatialInertia& o) const {
  const double m = mass + o.mass;
  const Vec3 c = m > 0.0 ? Vec3((mass * com + o.mass * o.com) / m) : Vec3::Zero();
  return {m, c, rot_inertia + o.rot_inertia};
}

Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 log_so3(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Mat3 renormalize(const Mat3& R) { return Eigen::Quaterniond(R).normalized().toRotationMatrix(); }

Mat3 rpy_to_rotation(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 rotation_to_rpy(const Mat3& R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return {roll, pitch, yaw};
}

}  // namespace wbstab::spatial
