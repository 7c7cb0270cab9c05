#pragma once

// Floating-base rigid-body dynamics: composite-rigid-body mass matrix,
// recursive Newton-Euler bias forces, frame and CoM Jacobians, contact
// inertia and forward dynamics.
//
// Generalized velocity is (base twist in base coordinates, joint rates).
// Frame Jacobians map it to the world-aligned frame velocity: angular velocity
// in world axes, then the linear velocity of the frame origin in world axes.
// Wrenches dual to that (moment about the frame origin, force; world axes).

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "wbstab/model.hpp"

namespace wbstab::rbd {

using model::Configuration;
using model::FrameRef;
using model::RobotModel;
using spatial::SpatialForce;
using spatial::SpatialMotion;
using spatial::Transform;

using Mat6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Mat3X = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Kinematic state of every body for one configuration. The model must
/// outlive the evaluator; buffers are per-instance.
class Evaluator {
 public:
  explicit Evaluator(const RobotModel& m);

  void update(const Configuration& q);

  const RobotModel& model() const { return *model_; }
  const Transform& body_pose(int b) const { return pose_[b]; }
  /// Spatial velocity of body b in its own coordinates.
  const SpatialMotion& body_velocity(int b) const { return vel_[b]; }

  Transform frame_pose(const FrameRef& f) const { return pose_[f.body] * f.offset; }
  /// World-aligned velocity of the frame origin.
  SpatialMotion frame_velocity(const FrameRef& f) const;
  Mat6X jacobian(const FrameRef& f) const;
  /// Classical acceleration of the frame origin at zero generalized acceleration.
  Vec6 jacobian_dot_qdot(const FrameRef& f) const;
  /// World-aligned acceleration of the frame origin for generalized acceleration qdd.
  Vec6 frame_acceleration(const FrameRef& f, const VecX& qdd) const;

  MatX mass_matrix() const;
  VecX inverse_dynamics(const VecX& qdd, const Vec3& gravity = kGravity) const;
  VecX bias_forces(const Vec3& gravity = kGravity) const;

  Vec3 com() const;
  Mat3X com_jacobian() const;
  Vec3 com_jacobian_dot_qdot() const;
  /// Sum of per-body linear momenta in world axes.
  Vec3 linear_momentum() const;

  double kinetic_energy() const;
  double potential_energy(const Vec3& gravity = kGravity) const;

 private:
  void point_jacobian(int body, const Vec3& point_world, Mat6X& J, double scale) const;

  const RobotModel* model_;
  VecX qdot_;
  std::vector<Transform> local_;   // body in parent
  std::vector<Transform> pose_;    // body in world
  std::vector<SpatialMotion> vel_;      // body coordinates
  std::vector<SpatialMotion> bias_acc_; // body coordinates, zero qdd, no gravity
};

struct DynamicsQuantities {
  MatX H;
  VecX c;
  MatX Jc;             // 6 n_c x (6 + n_a), rows grouped per contact, angular then linear
  VecX Jc_dot_qdot;    // 6 n_c
  Vec3 com;
  Mat3X com_jacobian;
};

struct ContactQuantities {
  MatX lambda_c;        // contact inertia
  MatX lambda_c_inv;    // J_c H^-1 J_c^T
  MatX gamma_c;         // -lambda_c J_c H^-1 S^T
  VecX h_c;             // lambda_c (J_c H^-1 c - Jdot_c qdot)
  double min_singular_value = 0.0;
};

MatX mass_matrix(const RobotModel& m, const Configuration& q);
VecX bias_forces(const RobotModel& m, const Configuration& q, const Vec3& gravity = kGravity);
VecX inverse_dynamics(const RobotModel& m, const Configuration& q, const VecX& qdd, const Vec3& gravity = kGravity);
Mat6X frame_jacobian(const RobotModel& m, const Configuration& q, const std::string& frame);
Vec6 frame_jacobian_dot_qdot(const RobotModel& m, const Configuration& q, const std::string& frame);
Transform frame_pose(const RobotModel& m, const Configuration& q, const std::string& frame);
Vec3 com_position(const RobotModel& m, const Configuration& q);
Mat3X com_jacobian(const RobotModel& m, const Configuration& q);

DynamicsQuantities dynamics_quantities(const RobotModel& m, const Configuration& q,
                                       const std::vector<std::string>& active_contacts,
                                       const Vec3& gravity = kGravity);

/// Contact inertia and the force/command maps. Throws RankDeficientError.
ContactQuantities contact_quantities(const MatX& H, const VecX& c, const MatX& Jc, const VecX& Jc_dot_qdot);
ContactQuantities contact_quantities(const RobotModel& m, const Configuration& q,
                                     const std::vector<std::string>& active_contacts,
                                     const Vec3& gravity = kGravity);

/// Generalized acceleration from joint torques and world-aligned frame wrenches.
VecX forward_dynamics(const RobotModel& m, const Configuration& q, const VecX& tau,
                      const std::vector<std::pair<std::string, SpatialForce>>& external_wrenches,
                      const Vec3& gravity = kGravity);

/// Advances the configuration by velocity v held over dt (SE(3) exponential on
/// the base, renormalized rotation) and stores v as the new velocity.
Configuration integrate(const Configuration& q, const VecX& v, double dt);

/// Velocity-space difference q1 - q0 over unit time: integrate(q0, d, 1) = q1
/// for the configuration part.
VecX difference(const Configuration& q0, const Configuration& q1);

}  // namespace wbstab::rbd
