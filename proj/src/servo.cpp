#include "wbstab/servo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wbstab/errors.hpp"
#include "wbstab/rbd.hpp"

namespace wbstab::servo {

void ServoParams::check(int n) const {
  if (kp.size() != n || kd.size() != n || ki.size() != n || torque_limits.size() != n)
    throw ValidationError("servo gains must have one entry per actuated joint (" + std::to_string(n) + ")");
  if ((kp.array() < 0.0).any() || (kd.array() < 0.0).any() || (ki.array() < 0.0).any())
    throw ValidationError("servo gains must be nonnegative");
  if (!(torque_limits.array() > 0.0).all()) throw ValidationError("servo torque limits must be positive");
}

double stance_inertia(const model::RobotModel& m, int dof) {
  // everything but the joint's own subtree swings about the joint when the
  // contacts are held; the load is shared between the supporting contacts
  rbd::Evaluator ev(m);
  ev.update(model::Configuration::zero(m));
  const auto& bodies = m.bodies();
  int b = 0;
  while (bodies[b].dof != dof) ++b;
  std::vector<bool> distal(bodies.size(), false);
  distal[b] = true;
  for (std::size_t k = b + 1; k < bodies.size(); ++k) distal[k] = bodies[k].parent >= 0 && distal[bodies[k].parent];
  const spatial::Transform& X = ev.body_pose(b);
  const Vec3 a = X.rotation * bodies[b].axis;
  double I = 0.0;
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    if (distal[k]) continue;
    const spatial::SpatialInertia& in = bodies[k].inertia;
    const spatial::Transform& Xk = ev.body_pose(static_cast<int>(k));
    const Vec3 ak = Xk.rotation.transpose() * a;
    const Vec3 r = a.cross(Xk.apply(in.com) - X.translation);
    I += ak.dot(in.inertia_about_com() * ak) + in.mass * r.squaredNorm();
  }
  return I / std::max(1, m.num_contacts());
}

ServoParams default_params(const model::RobotModel& m) {
  const int n = m.num_actuated();
  const double w = 2.0 * M_PI * kDefaultBandwidthHz;
  ServoParams p;
  p.kp.resize(n);
  p.kd.resize(n);
  p.ki = VecX::Zero(n);
  p.torque_limits = m.torque_limits();
  for (int i = 0; i < n; ++i) {
    const double I = stance_inertia(m, i);
    p.kp[i] = I * w * w;
    p.kd[i] = 2.0 * kDefaultDamping * I * w;
  }
  return p;
}

ServoState ServoState::zero(int n) { return {VecX::Zero(n), VecX::Zero(n), VecX::Zero(n)}; }

ServoOutput servo_torque(const ServoParams& p, const ServoState& s, const VecX& q_cmd, const VecX& q_meas,
                         const VecX& qd_meas, const VecX* gravity_torque, double dt) {
  if (!(dt > 0.0)) throw ValidationError("servo dt must be positive");
  const int n = static_cast<int>(q_cmd.size());
  ServoOutput out;
  out.state = s;
  if (out.state.integral_error.size() != n) out.state.integral_error = VecX::Zero(n);
  const VecX e = q_cmd - q_meas;
  out.tau.resize(n);
  for (int i = 0; i < n; ++i) {
    double integral = out.state.integral_error[i];
    if (p.ki[i] > 0.0) {
      const double cap = p.torque_limits[i] / p.ki[i];
      integral = std::clamp(integral + e[i] * dt, -cap, cap);
    }
    out.state.integral_error[i] = integral;
    double tau = p.kp[i] * e[i] - p.kd[i] * qd_meas[i] + p.ki[i] * integral;
    if (p.gravity_comp && gravity_torque) tau += (*gravity_torque)[i];
    out.tau[i] = std::clamp(tau, -p.torque_limits[i], p.torque_limits[i]);
  }
  out.state.last_q = q_meas;
  out.state.last_qd = qd_meas;
  return out;
}

}  // namespace wbstab::servo
