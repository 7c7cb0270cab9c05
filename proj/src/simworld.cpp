#include "wbstab/simworld.hpp"

#include <cmath>

#include <Eigen/LU>

#include "wbstab/errors.hpp"

namespace wbstab::sim {

namespace {

// Amplitude envelope 0 -> 1 over the ramp, C1 at both ends.
std::pair<double, double> envelope(double t, double ramp) {
  if (t <= 0.0) return {0.0, 0.0};
  if (ramp <= 0.0 || t >= ramp) return {1.0, 0.0};
  const double u = t / ramp;
  return {u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u) / ramp};
}

}  // namespace

Vec3 Platform::offsets(double t) const {
  const PlatformMotion& m = motion;
  Vec3 o = Vec3::Zero();
  if (m.frequency > 0.0) {
    const double e = envelope(t, m.ramp_time).first;
    const double s = std::sin(2.0 * M_PI * m.frequency * t + m.phase);
    o = e * s * Vec3(m.height_amplitude, m.roll_amplitude, m.pitch_amplitude);
  }
  if (m.step_time >= 0.0 && t >= m.step_time) o += Vec3(m.step_height, m.step_roll, 0.0);
  return o;
}

Transform Platform::pose(double t) const {
  const Vec3 o = offsets(t);
  return {base_rotation * spatial::rpy_to_rotation(o[1], o[2], 0.0), centre + base_rotation * Vec3(0.0, 0.0, o[0])};
}

SpatialMotion Platform::velocity(double t) const {
  const PlatformMotion& m = motion;
  if (!(m.frequency > 0.0)) return {};
  const auto [e, de] = envelope(t, m.ramp_time);
  const double w = 2.0 * M_PI * m.frequency;
  const double s = std::sin(w * t + m.phase);
  const double c = std::cos(w * t + m.phase);
  const Vec3 rate = (de * s + e * w * c) * Vec3(m.height_amplitude, m.roll_amplitude, m.pitch_amplitude);
  const Vec3 o = offsets(t);
  // R = B Ry(pitch) Rx(roll)
  const Mat3 Ry = Eigen::AngleAxisd(o[2], Vec3::UnitY()).toRotationMatrix();
  const Vec3 omega = base_rotation * (rate[2] * Vec3::UnitY() + Ry * Vec3::UnitX() * rate[1]);
  return {omega, base_rotation * Vec3(0.0, 0.0, rate[0])};
}

void ContactParams::check() const {
  if (!(stiffness > 0.0) || !(damping > 0.0)) throw ValidationError("contact stiffness and damping must be positive");
  if (!(tangential_stiffness > 0.0) || !(tangential_damping >= 0.0))
    throw ValidationError("tangential contact stiffness must be positive");
  if (!(friction_mu > 0.0)) throw ValidationError("friction_mu must be positive");
}

void SimParams::check() const {
  if (!(sim_dt > 0.0)) throw ValidationError("sim_dt must be positive");
  if (!(sensor_cutoff_hz > 0.0)) throw ValidationError("sensor cutoff must be positive");
  contact.check();
}

std::vector<Vec3> World::sole_corners(const Vec2& h) {
  return {Vec3(h.x(), h.y(), 0.0), Vec3(h.x(), -h.y(), 0.0), Vec3(-h.x(), -h.y(), 0.0), Vec3(-h.x(), h.y(), 0.0)};
}

World::World(const model::RobotModel& m, std::vector<Platform> platforms, servo::ServoParams servo, SimParams params)
    : model_(&m), platforms_(std::move(platforms)), servo_(std::move(servo)), params_(params), ev_(m) {
  params_.check();
  servo_.check(m.num_actuated());
  for (const auto& c : m.contacts()) contact_frames_.push_back(m.frame(c.name));
  reset(model::Configuration::zero(m));
}

void World::reset(const model::Configuration& q, double t) {
  q_ = q;
  t_ = t;
  substeps_ = 0;
  status_ = SimStatus::ok;
  servo_state_ = servo::ServoState::zero(model_->num_actuated());
  tau_ = VecX::Zero(model_->num_actuated());
  corners_.assign(contact_frames_.size(), std::vector<CornerState>(4));
  raw_.assign(contact_frames_.size(), SpatialForce{});
  filtered_.assign(contact_frames_.size(), SpatialForce{});
  sensor_frames_.assign(contact_frames_.size(), Transform::identity());
  filter_primed_ = false;
  start_time_ = t;
}

void World::step(const VecX& q_cmd, double dt) {
  if (q_cmd.size() != model_->num_actuated()) throw ValidationError("q_cmd has the wrong size");
  const long n = std::lround(dt / params_.sim_dt);
  if (n < 1 || std::abs(n * params_.sim_dt - dt) > 1e-9 * dt)
    throw ValidationError("control dt must be a whole multiple of sim_dt");
  for (long k = 0; k < n && status_ == SimStatus::ok; ++k) substep(q_cmd, params_.sim_dt);
}

void World::penalty_forces(const rbd::Evaluator& ev, double t, double h) {
  (void)h;
  const ContactParams& cp = params_.contact;
  std::vector<Transform> X(platforms_.size());
  std::vector<SpatialMotion> V(platforms_.size());
  for (std::size_t j = 0; j < platforms_.size(); ++j) {
    X[j] = platforms_[j].pose(t);
    V[j] = platforms_[j].velocity(t);
  }
  for (std::size_t c = 0; c < contact_frames_.size(); ++c) {
    const model::FrameRef& f = contact_frames_[c];
    const Transform sole = ev.frame_pose(f);
    sensor_frames_[c] = sole;
    const auto pts = sole_corners(model_->contacts()[c].half_extents);
    SpatialForce total;
    for (int k = 0; k < 4; ++k) {
      CornerState& cs = corners_[c][k];
      const model::FrameRef corner{f.body, f.offset * Transform::from_translation(pts[k])};
      const Vec3 p = sole.apply(pts[k]);

      int best = -1;
      double depth = 0.0;
      Vec3 local = Vec3::Zero();
      for (std::size_t j = 0; j < platforms_.size(); ++j) {
        const Vec3 l = X[j].rotation.transpose() * (p - X[j].translation);
        const Vec2& e = platforms_[j].half_extents;
        if (std::abs(l.x()) > e.x() || std::abs(l.y()) > e.y() || -l.z() <= depth) continue;
        best = static_cast<int>(j);
        depth = -l.z();
        local = l;
      }
      if (best < 0) {
        cs = CornerState{};
        continue;
      }
      const Vec3 v_point = ev.frame_velocity(corner).linear;
      const Vec3 v_surface = V[best].linear + V[best].angular.cross(p - X[best].translation);
      const Vec3 v_rel = X[best].rotation.transpose() * (v_point - v_surface);

      if (!cs.in_contact || cs.platform != best) cs.anchor = local.head<2>();
      cs.in_contact = true;
      cs.platform = best;

      const double fn = std::max(0.0, cp.stiffness * depth - cp.damping * v_rel.z());
      Vec2 ft = Vec2::Zero();
      if (fn > 0.0) {
        ft = -cp.tangential_stiffness * (local.head<2>() - cs.anchor) - cp.tangential_damping * v_rel.head<2>();
        const double limit = cp.friction_mu * fn;
        if (ft.norm() > limit) {
          ft *= limit / ft.norm();
          cs.anchor = local.head<2>() + (ft + cp.tangential_damping * v_rel.head<2>()) / cp.tangential_stiffness;
        }
      } else {
        cs.anchor = local.head<2>();
      }
      cs.point = p;
      cs.normal_force = fn;
      cs.tangential_force = ft.norm();
      cs.force = X[best].rotation * Vec3(ft.x(), ft.y(), fn);
      total.force += cs.force;
      total.moment += (p - sole.translation).cross(cs.force);
    }
    raw_[c] = total;
  }
}

void World::substep(const VecX& q_cmd, double h) {
  ev_.update(q_);
  VecX gravity_torque;
  const VecX* gptr = nullptr;
  if (servo_.gravity_comp) {
    gravity_torque = (ev_.bias_forces(params_.gravity) - ev_.bias_forces(Vec3::Zero())).tail(model_->num_actuated());
    gptr = &gravity_torque;
  }
  servo::ServoOutput out = servo::servo_torque(servo_, servo_state_, q_cmd, q_.joints, q_.joint_rates, gptr, h);
  servo_state_ = std::move(out.state);
  tau_ = out.tau;

  const int na = model_->num_actuated();
  VecX qdd;
  if (params_.backend == ContactBackend::penalty) {
    penalty_forces(ev_, t_, h);
    VecX rhs = -ev_.bias_forces(params_.gravity);
    rhs.tail(na) += tau_;
    for (std::size_t c = 0; c < contact_frames_.size(); ++c)
      if (raw_[c].force.squaredNorm() > 0.0) rhs += ev_.jacobian(contact_frames_[c]).transpose() * raw_[c].vector();
    // servo damping taken at the end-of-step velocity on unsaturated joints,
    // so stiff dampers on light links stay stable at the sub-step
    MatX H = ev_.mass_matrix();
    VecX damp = VecX::Zero(na);
    for (int i = 0; i < na; ++i)
      if (std::abs(tau_[i]) < servo_.torque_limits[i]) damp[i] = servo_.kd[i];
    H.diagonal().tail(na) += h * damp;
    qdd = H.llt().solve(rhs);
    tau_ -= h * damp.cwiseProduct(qdd.tail(na));
  } else {
    std::vector<std::string> names;
    for (const auto& c : model_->contacts()) names.push_back(c.name);
    auto [a, F] = constrained_forward_dynamics(*model_, q_, tau_, names, params_.gravity);
    qdd = std::move(a);
    for (std::size_t c = 0; c < raw_.size(); ++c) raw_[c] = SpatialForce::from_vector(F.segment<6>(6 * c));
  }

  const VecX v = q_.velocity() + h * qdd;
  if (!v.allFinite() || v.norm() > params_.divergence_limit) {
    status_ = SimStatus::diverged;
    return;
  }
  q_ = rbd::integrate(q_, v, h);
  ++substeps_;
  t_ = start_time_ + substeps_ * h;

  const double alpha = h / (h + 1.0 / (2.0 * M_PI * params_.sensor_cutoff_hz));
  for (std::size_t c = 0; c < raw_.size(); ++c) {
    if (!filter_primed_) filtered_[c] = raw_[c];
    else filtered_[c] = SpatialForce::from_vector(filtered_[c].vector() + alpha * (raw_[c].vector() - filtered_[c].vector()));
  }
  filter_primed_ = true;
}

std::pair<VecX, VecX> constrained_forward_dynamics(const model::RobotModel& m, const model::Configuration& q,
                                                   const VecX& tau, const std::vector<std::string>& contacts,
                                                   const Vec3& gravity) {
  const rbd::DynamicsQuantities d = rbd::dynamics_quantities(m, q, contacts, gravity);
  const int n = m.num_velocities();
  const int k = static_cast<int>(d.Jc.rows());
  MatX K = MatX::Zero(n + k, n + k);
  K.topLeftCorner(n, n) = d.H;
  K.topRightCorner(n, k) = -d.Jc.transpose();
  K.bottomLeftCorner(k, n) = d.Jc;
  VecX rhs(n + k);
  rhs.head(n) = -d.c;
  rhs.segment(6, m.num_actuated()) += tau;
  rhs.tail(k) = -d.Jc_dot_qdot;
  const VecX sol = K.partialPivLu().solve(rhs);
  return {sol.head(n), sol.tail(k)};
}

std::vector<Platform> scenario_flat() {
  Platform p;
  p.id = "ground";
  p.half_extents = Vec2(2.0, 2.0);
  return {p};
}

std::vector<Platform> scenario_coupled(const ScenarioShape& s) {
  Platform p;
  p.id = "platform";
  p.half_extents = Vec2(0.6, 0.6);
  p.attached_foot = "l_sole,r_sole";
  p.motion.height_amplitude = s.height_amplitude;
  p.motion.roll_amplitude = s.attitude_amplitude;
  p.motion.pitch_amplitude = s.attitude_amplitude;
  p.motion.frequency = s.attitude_amplitude > 0.0 ? s.attitude_rate / (2.0 * M_PI * s.attitude_amplitude) : 0.0;
  p.motion.ramp_time = s.ramp_time;
  return {p};
}

namespace {

Platform foot_platform(const std::string& id, const Vec3& foot, const std::string& contact) {
  Platform p;
  p.id = id;
  p.centre = Vec3(foot.x(), foot.y(), 0.0);
  p.half_extents = Vec2(0.2, 0.09);
  p.attached_foot = contact;
  return p;
}

}  // namespace

std::vector<Platform> scenario_independent(const ScenarioShape& s, const Vec3& left_foot, const Vec3& right_foot) {
  std::vector<Platform> out{foot_platform("left", left_foot, "l_sole"), foot_platform("right", right_foot, "r_sole")};
  for (int i = 0; i < 2; ++i) {
    PlatformMotion& m = out[i].motion;
    m.height_amplitude = s.height_amplitude;
    m.roll_amplitude = s.attitude_amplitude;
    m.pitch_amplitude = s.attitude_amplitude;
    m.frequency = s.attitude_amplitude > 0.0 ? s.attitude_rate / (2.0 * M_PI * s.attitude_amplitude) : 0.0;
    m.phase = i == 0 ? 0.0 : M_PI;
    m.ramp_time = s.ramp_time;
  }
  return out;
}

std::vector<Platform> scenario_drop(double drop, double tilt, double t_event, const Vec3& left_foot,
                                    const Vec3& right_foot) {
  std::vector<Platform> out{foot_platform("left", left_foot, "l_sole"), foot_platform("right", right_foot, "r_sole")};
  out[0].motion.step_time = t_event;
  out[0].motion.step_height = -drop;
  out[0].motion.step_roll = tilt;
  return out;
}

}  // namespace wbstab::sim
