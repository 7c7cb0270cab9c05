#pragma once

// Representative ZMP-feedback stabilizer: CoM admittance on the ZMP error,
// per-foot height offsets damping the vertical force difference and ankle
// damping driving each foot's centre of pressure to its centre. Joint
// commands come from the same velocity-level tracker as the force-feedback
// stabilizer, with the admittance constraint replaced by the foot height rates.

#include <vector>

#include "wbstab/stabilizer.hpp"

namespace wbstab::zmp {

using spatial::SpatialForce;
using spatial::Transform;

struct ZmpGains {
  double k_zmp = 3.0;       // 1/s
  double k_fz = 1.2e-4;     // m/(N s)
  double k_ankle = 0.01;    // rad/(N m s), foot tilt rate per horizontal moment error
  double lip_omega = 3.4;   // 1/s, sqrt(g / z_c)
  double com_clamp = 0.05;  // m
  double foot_clamp = 0.05; // m
  double zmp_filter_hz = 40.0;

  void check() const;
};

struct ZmpState {
  Vec2 com_offset = Vec2::Zero();
  VecX foot_height_offsets;  // per contact
  Vec2 zmp_filter = Vec2::Zero();
  bool primed = false;
};

/// World-frame ZMP of world-aligned sole wrenches (moment about each sole
/// origin) under the flat-ground assumption. Throws Error below 20 N total.
Vec2 measure_zmp(const std::vector<SpatialForce>& wrenches, const std::vector<Transform>& poses);

struct ZmpOutput {
  Vec3 com_ref;             // modified CoM reference
  VecX foot_height_rates;   // m/s, per contact
  VecX foot_tilt_rates;     // rad/s, world x/y per contact
  VecX foot_height_offsets; // m, per contact
  ZmpState state;
};

/// Desired left share of the vertical load for a ZMP reference between the feet.
double load_share(const Vec2& zmp_ref, const Vec3& left, const Vec3& right);

/// One baseline update over dt. Wrenches and poses are per contact; the first
/// two contacts are treated as left and right for the force-difference term.
ZmpOutput zmp_stabilize(const ZmpState& state, const ZmpGains& gains, const Vec2& zmp_meas, const Vec2& zmp_ref,
                        const Vec3& com_ref, const std::vector<SpatialForce>& wrenches,
                        const std::vector<Transform>& poses, double dt);

struct BaselineTick {
  VecX q_cmd;
  ZmpState state;
  Vec2 zmp_meas = Vec2::Zero();
  Vec2 zmp_ref = Vec2::Zero();
  Vec3 com_ref = Vec3::Zero();
  stab::VelocityIk ik;
};

/// Full baseline tick: measure the ZMP, update the offsets and track with the
/// force constraint disabled.
BaselineTick baseline_track(const model::RobotModel& m, const model::Configuration& q, const stab::References& refs,
                            const stab::StabilizerConfig& cfg, const ZmpGains& gains, const ZmpState& state,
                            const VecX& q_cmd, const std::vector<SpatialForce>& wrenches,
                            const std::vector<int>* warm = nullptr);

}  // namespace wbstab::zmp
