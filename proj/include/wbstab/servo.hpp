#pragma once

// Joint position servo of the simulated robot: PD(+I) on the commanded joint
// positions with torque saturation. Damping acts on the measured velocity only.

#include "wbstab/model.hpp"

namespace wbstab::servo {

struct ServoParams {
  VecX kp;             // N m / rad
  VecX kd;             // N m s / rad
  VecX ki;             // N m / (rad s)
  VecX torque_limits;  // N m
  bool gravity_comp = false;

  /// Throws ValidationError on negative gains, nonpositive limits or size mismatch.
  void check(int n) const;
};

inline constexpr double kDefaultBandwidthHz = 10.0;
inline constexpr double kDefaultDamping = 0.7;

/// Inertia about joint dof's axis of the part of the robot the joint moves
/// when the contacts are held, per supporting contact (zero configuration).
double stance_inertia(const model::RobotModel& m, int dof);

/// PD gains placing each joint near kDefaultBandwidthHz at its stance inertia.
ServoParams default_params(const model::RobotModel& m);

struct ServoState {
  VecX integral_error;  // rad s
  VecX last_q;
  VecX last_qd;

  static ServoState zero(int n);
};

struct ServoOutput {
  VecX tau;
  ServoState state;
};

/// tau = clamp(kp (q_cmd - q) - kd qd + ki int(e) + gravity, +-limit). The
/// integral is updated first and clamped to +-limit/ki.
ServoOutput servo_torque(const ServoParams& p, const ServoState& s, const VecX& q_cmd, const VecX& q_meas,
                         const VecX& qd_meas, const VecX* gravity_torque, double dt);

}  // namespace wbstab::servo
