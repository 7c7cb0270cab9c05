#pragma once

// Physics plant: floating-base robot with joint servos in the loop, standing on
// kinematic platforms. Feet touch platforms at the four corners of each contact
// rectangle through penalty springs with anchored stick-slip friction.

#include <string>
#include <utility>
#include <vector>

#include "wbstab/rbd.hpp"
#include "wbstab/servo.hpp"

namespace wbstab::sim {

using spatial::SpatialForce;
using spatial::SpatialMotion;
using spatial::Transform;

/// Smooth sinusoidal height/roll/pitch motion about a centre, optionally with a
/// step change in height and roll at a given time.
struct PlatformMotion {
  double height_amplitude = 0.0;  // m
  double roll_amplitude = 0.0;    // rad
  double pitch_amplitude = 0.0;   // rad
  double frequency = 0.0;         // Hz
  double phase = 0.0;             // rad
  double ramp_time = 1.0;         // s, amplitude envelope ramps in over this time
  double step_time = -1.0;        // s, < 0 disables the step
  double step_height = 0.0;       // m
  double step_roll = 0.0;         // rad
};

struct Platform {
  std::string id;
  Vec3 centre = Vec3::Zero();      // surface frame origin at rest
  Vec2 half_extents = Vec2(0.5, 0.5);
  Mat3 base_rotation = Mat3::Identity();
  PlatformMotion motion;
  std::string attached_foot;  // informational

  Transform pose(double t) const;
  /// World-aligned velocity of the surface frame origin.
  SpatialMotion velocity(double t) const;
  /// Height, roll and pitch offsets at time t.
  Vec3 offsets(double t) const;
};

struct ContactParams {
  double stiffness = 1e5;  // N/m per corner
  double damping = 1e3;    // N s/m per corner
  double friction_mu = 0.7;
  double tangential_stiffness = 1e5;
  double tangential_damping = 1e3;

  void check() const;
};

enum class ContactBackend { penalty, constraint };

struct SimParams {
  double sim_dt = 1e-4;
  double sensor_cutoff_hz = 200.0;
  double divergence_limit = 1e3;
  Vec3 gravity = kGravity;
  ContactParams contact;
  ContactBackend backend = ContactBackend::penalty;

  void check() const;
};

enum class SimStatus { ok, diverged };

struct CornerState {
  bool in_contact = false;
  int platform = -1;
  Vec2 anchor = Vec2::Zero();  // platform-surface coordinates
  Vec3 point = Vec3::Zero();   // world, where the force was applied
  Vec3 force = Vec3::Zero();   // world, last sub-step
  double normal_force = 0.0;
  double tangential_force = 0.0;
};

class World {
 public:
  World(const model::RobotModel& m, std::vector<Platform> platforms, servo::ServoParams servo, SimParams params = {});

  /// Places the robot at q (velocity taken from q) and clears contact, servo and filter state.
  void reset(const model::Configuration& q, double t = 0.0);

  /// Advances by dt holding the joint position command, in sub-steps of sim_dt.
  void step(const VecX& q_cmd, double dt);

  double time() const { return t_; }
  const model::Configuration& state() const { return q_; }
  SimStatus status() const { return status_; }
  const model::RobotModel& model() const { return *model_; }
  const std::vector<Platform>& platforms() const { return platforms_; }
  const SimParams& params() const { return params_; }
  const servo::ServoState& servo_state() const { return servo_state_; }
  /// Joint torque applied over the last sub-step, servo damping taken implicitly.
  const VecX& last_torque() const { return tau_; }

  /// Sensor wrenches per contact frame: world-aligned, moment about the sole
  /// origin. Filtered at sensor_cutoff_hz; raw values are the last sub-step.
  const std::vector<SpatialForce>& measured_wrenches() const { return filtered_; }
  const std::vector<SpatialForce>& raw_wrenches() const { return raw_; }
  const std::vector<std::vector<CornerState>>& corners() const { return corners_; }
  /// Sole poses at which the last raw wrenches were evaluated.
  const std::vector<Transform>& sensor_frames() const { return sensor_frames_; }

  /// Corner positions of a contact rectangle in the sole frame.
  static std::vector<Vec3> sole_corners(const Vec2& half_extents);

 private:
  void substep(const VecX& q_cmd, double h);
  void penalty_forces(const rbd::Evaluator& ev, double t, double h);

  const model::RobotModel* model_;
  std::vector<Platform> platforms_;
  servo::ServoParams servo_;
  SimParams params_;
  std::vector<model::FrameRef> contact_frames_;
  rbd::Evaluator ev_;

  double t_ = 0.0;
  double start_time_ = 0.0;
  long substeps_ = 0;
  model::Configuration q_;
  servo::ServoState servo_state_;
  VecX tau_;
  SimStatus status_ = SimStatus::ok;
  std::vector<std::vector<CornerState>> corners_;
  std::vector<SpatialForce> raw_;
  std::vector<SpatialForce> filtered_;
  std::vector<Transform> sensor_frames_;
  bool filter_primed_ = false;
};

/// Bilateral rigid contact at the given frames: solves
/// [H -J'; J 0] [qdd; F] = [S'tau - c; -Jdot qdot]. F is world-aligned at each frame.
std::pair<VecX, VecX> constrained_forward_dynamics(const model::RobotModel& m, const model::Configuration& q,
                                                   const VecX& tau, const std::vector<std::string>& contacts,
                                                   const Vec3& gravity = kGravity);

// Scenario platform sets. Platform surfaces sit at z = 0 at rest; left_foot and
// right_foot give the sole positions the independent platforms centre under.
struct ScenarioShape {
  double height_amplitude = 0.03;      // m
  double attitude_amplitude = 0.1396;  // rad (8 deg)
  double attitude_rate = 0.2194;       // rad/s peak (12.57 deg/s)
  double ramp_time = 1.0;
};

std::vector<Platform> scenario_flat();
std::vector<Platform> scenario_coupled(const ScenarioShape& s);
std::vector<Platform> scenario_independent(const ScenarioShape& s, const Vec3& left_foot, const Vec3& right_foot);
std::vector<Platform> scenario_drop(double drop, double tilt, double t_event, const Vec3& left_foot,
                                    const Vec3& right_foot);

}  // namespace wbstab::sim
