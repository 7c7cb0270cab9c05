#pragma once

// Force-feedback whole-body stabilizer for position-controlled robots.
//
// Each tick an inverse-dynamics QP over (qdd, tau, F) produces the reference
// contact wrenches F_ID; a velocity-level QP over (v, Delta) then tracks the
// CoM and orientation tasks subject to the admittance constraint
//
//   J_c v = -Lambda_c^-1 K^-1 e_F + Delta,   e_F = F_meas - F_ID,
//
// and the joint part of v is integrated into the position command.
//
// Wrench stacks are 6 per active contact, world-aligned, moment about the
// contact frame origin, exerted by the environment on the robot.

#include <map>
#include <string>
#include <vector>

#include "wbstab/qp.hpp"
#include "wbstab/rbd.hpp"

namespace wbstab::stab {

using spatial::SpatialMotion;
using spatial::Transform;
using rbd::Mat3X;
using rbd::Mat6X;

enum class TaskKind { com, base_orientation, frame };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::com;
  std::string frame;  // kind == frame only
  MatX weight;        // 3x3 (com, orientation) or 6x6 (frame), PSD
  VecX kp;            // acceleration-level feedback, 1/s^2, per axis
  VecX kd;            // 1/s
  VecX kp_velocity;   // velocity-level feedback of the tracking QP, 1/s

  int dim() const { return kind == TaskKind::frame ? 6 : 3; }
  static TaskSpec com(double weight, double kp, double kd, double kp_velocity);
  static TaskSpec base_orientation(double weight, double kp, double kd, double kp_velocity);
};

struct StabilizerConfig {
  std::vector<TaskSpec> tasks;
  MatX torque_weight;       // Q_tau, n_a x n_a
  MatX disturbance_weight;  // Q_d, 6 n_c x 6 n_c
  MatX force_gain;          // K, 6 n_c x 6 n_c, negative definite
  double friction_mu = 0.7;
  double min_normal_force = 5.0;  // N
  std::vector<Vec2> foot_half_extents;  // per model contact
  VecX velocity_limits;                 // per joint, rad/s
  double control_dt = 1e-3;
  double force_error_cutoff_hz = 40.0;
  double residual_tolerance = 1e-6;  // equality residuals, relative
  double kkt_tolerance = 1e-8;
  bool measure_time = false;

  /// Defaults for all model contacts in double support.
  static StabilizerConfig defaults(const model::RobotModel& m);
  /// K = k I over n_c contacts.
  void set_force_gain(double k, int n_contacts);
  /// Throws ValidationError.
  void check(const model::RobotModel& m, int n_contacts) const;
};

struct FrameReference {
  Transform pose;
  SpatialMotion velocity;      // world-aligned
  SpatialMotion acceleration;  // world-aligned
};

struct References {
  Vec3 com_position = Vec3::Zero();
  Vec3 com_velocity = Vec3::Zero();
  Vec3 com_acceleration = Vec3::Zero();
  Mat3 base_rotation = Mat3::Identity();
  Vec3 base_angular_velocity = Vec3::Zero();
  Vec3 base_angular_acceleration = Vec3::Zero();
  std::map<std::string, FrameReference> frames;
  std::vector<std::string> contacts;
  VecX force_offset;  // added to F_ID when nonempty, 6 n_c
};

/// Per-tick model quantities shared by the QPs, evaluated at the measured state.
struct TickQuantities {
  std::vector<std::string> contacts;
  std::vector<int> contact_index;  // into the model contacts
  std::vector<Transform> contact_pose;
  MatX H;
  VecX c;
  MatX Jc;
  VecX Jc_dot_qdot;
  Vec3 com;
  Vec3 com_velocity;
  Mat3X Jcom;
  Vec3 com_dot_qdot;
  Mat3 base_rotation;
  Vec3 base_angular_velocity;  // world
  std::map<std::string, Mat6X> frame_jacobian;
  std::map<std::string, Vec6> frame_dot_qdot;
  std::map<std::string, Transform> frame_pose;
  std::map<std::string, SpatialMotion> frame_velocity;
};

TickQuantities tick_quantities(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                               const StabilizerConfig& cfg);

struct ReferenceForce {
  VecX F;    // F_ID, before refs.force_offset
  VecX tau;  // tau_ID
  VecX qdd;  // qdd_ID
  qp::QpStatus status = qp::QpStatus::optimal;
  int iterations = 0;
  double kkt_residual = 0.0;
  double dynamics_residual = 0.0;  // H qdd + c - S'tau - J'F, relative
  double contact_residual = 0.0;   // J qdd + Jdot qdot, relative
  double cone_violation = 0.0;     // largest friction/CoP row violation, N
  std::vector<int> active_set;
};

/// Inverse-dynamics QP. Throws InfeasibleError, RankDeficientError.
ReferenceForce reference_force(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                               const StabilizerConfig& cfg);
ReferenceForce reference_force(const TickQuantities& tq, const model::RobotModel& m, const References& refs,
                               const StabilizerConfig& cfg, const std::vector<int>* warm = nullptr);

/// Friction pyramid, minimum normal force, CoP and yaw rows for one contact,
/// as C F <= d with F the world-aligned wrench at the contact frame.
void contact_wrench_rows(const Mat3& R, const Vec2& half_extents, double mu, double f_min, MatX& C, VecX& d);

struct VelocityIk {
  VecX v;      // base twist (body) and joint rates
  VecX delta;  // empty when Delta is not a variable
  qp::QpStatus status = qp::QpStatus::optimal;
  int iterations = 0;
  double kkt_residual = 0.0;
  double constraint_residual = 0.0;  // J_c v - Delta - rhs, relative
  std::vector<int> active_set;
};

/// Velocity-level tracking QP with J_c v = contact_rhs (+ Delta when free_delta).
VelocityIk velocity_ik(const TickQuantities& tq, const model::RobotModel& m, const model::Configuration& q,
                       const References& refs, const StabilizerConfig& cfg, const VecX& contact_rhs, bool free_delta,
                       const std::vector<int>* warm = nullptr);

struct StabilizerState {
  VecX q_cmd;
  VecX F_ID;
  VecX filtered_error;
  std::vector<int> warm11;
  std::vector<int> warm15;
};

StabilizerState init(const model::RobotModel& m, const model::Configuration& q0);

struct Diagnostics {
  VecX F_ID;            // including any force offset
  VecX e_F;             // raw
  VecX e_F_filtered;
  VecX admittance_rhs;  // -Lambda^-1 K^-1 e_F
  VecX delta;
  VecX v;
  qp::QpStatus qp11_status = qp::QpStatus::optimal;
  qp::QpStatus qp15_status = qp::QpStatus::optimal;
  double kkt11 = 0.0;
  double kkt15 = 0.0;
  double residual11b = 0.0;
  double residual11c = 0.0;
  double residual15b = 0.0;
  std::vector<Vec2> cop;  // measured, contact frame coordinates
  double solve_time_us = 0.0;
};

struct TrackResult {
  VecX q_cmd;
  StabilizerState state;
  Diagnostics diag;
};

/// One stabilizer tick. Throws on infeasible QPs and on residual checks.
TrackResult track(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                  const StabilizerConfig& cfg, const StabilizerState& state, const VecX& F_meas);

/// Centre of pressure of a world-aligned wrench at a contact frame, in frame
/// coordinates; zero when the normal force is below 1 N.
Vec2 centre_of_pressure(const Transform& frame, const spatial::SpatialForce& w);

/// Stands still at the current CoM and base orientation.
References hold_references(const model::RobotModel& m, const model::Configuration& q,
                           const std::vector<std::string>& contacts);

}  // namespace wbstab::stab
