#include "wbstab/rbd.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "wbstab/errors.hpp"

namespace wbstab::rbd {

using spatial::cross;
using spatial::inertia_apply;
using spatial::inverse_transform_motion;
using spatial::skew;
using spatial::transform_force;

namespace {

SpatialMotion axis_motion(const Vec3& axis, double rate) { return {axis * rate, Vec3::Zero()}; }

Mat3 se3_left_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 K = skew(w);
  if (theta < 1e-8) return Mat3::Identity() + 0.5 * K + K * K / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * K + (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

}  // namespace

Evaluator::Evaluator(const RobotModel& m)
    : model_(&m),
      qdot_(VecX::Zero(m.num_velocities())),
      local_(m.bodies().size()),
      pose_(m.bodies().size()),
      vel_(m.bodies().size()),
      bias_acc_(m.bodies().size()) {}

void Evaluator::update(const Configuration& q) {
  const auto& bodies = model_->bodies();
  qdot_ = q.velocity();
  pose_[0] = q.base_pose;
  local_[0] = Transform::identity();
  vel_[0] = q.base_twist;
  bias_acc_[0] = SpatialMotion{};
  for (std::size_t b = 1; b < bodies.size(); ++b) {
    const model::Body& body = bodies[b];
    const double angle = q.joints[body.dof];
    local_[b] = body.origin * Transform::from_rotation(Eigen::AngleAxisd(angle, body.axis).toRotationMatrix());
    pose_[b] = pose_[body.parent] * local_[b];
    const SpatialMotion s = axis_motion(body.axis, q.joint_rates[body.dof]);
    vel_[b] = inverse_transform_motion(local_[b], vel_[body.parent]) + s;
    bias_acc_[b] = inverse_transform_motion(local_[b], bias_acc_[body.parent]) + cross(vel_[b], s);
  }
}

SpatialMotion Evaluator::frame_velocity(const FrameRef& f) const {
  const Mat3& R = pose_[f.body].rotation;
  const SpatialMotion& v = vel_[f.body];
  const Vec3& r = f.offset.translation;
  return {R * v.angular, R * (v.linear + v.angular.cross(r))};
}

void Evaluator::point_jacobian(int body, const Vec3& p, Mat6X& J, double scale) const {
  const auto& bodies = model_->bodies();
  for (int b = body; b >= 0; b = bodies[b].parent) {
    if (b == 0) {
      const Mat3& R0 = pose_[0].rotation;
      J.block<3, 3>(0, 0) += scale * R0;
      J.block<3, 3>(3, 0) -= scale * skew(p - pose_[0].translation) * R0;
      J.block<3, 3>(3, 3) += scale * R0;
      break;
    }
    const Vec3 a = pose_[b].rotation * bodies[b].axis;
    const int col = 6 + bodies[b].dof;
    J.block<3, 1>(0, col) += scale * a;
    J.block<3, 1>(3, col) += scale * a.cross(p - pose_[b].translation);
  }
}

Mat6X Evaluator::jacobian(const FrameRef& f) const {
  Mat6X J = Mat6X::Zero(6, model_->num_velocities());
  point_jacobian(f.body, frame_pose(f).translation, J, 1.0);
  return J;
}

Vec6 Evaluator::jacobian_dot_qdot(const FrameRef& f) const {
  const Mat3& R = pose_[f.body].rotation;
  const SpatialMotion& v = vel_[f.body];
  const SpatialMotion& a = bias_acc_[f.body];
  const Vec3& r = f.offset.translation;
  const Vec3 vp = v.linear + v.angular.cross(r);
  Vec6 out;
  out << R * a.angular, R * (a.linear + a.angular.cross(r) + v.angular.cross(vp));
  return out;
}

Vec6 Evaluator::frame_acceleration(const FrameRef& f, const VecX& qdd) const {
  return jacobian(f) * qdd + jacobian_dot_qdot(f);
}

MatX Evaluator::mass_matrix() const {
  const auto& bodies = model_->bodies();
  const int n = model_->num_velocities();
  std::vector<spatial::SpatialInertia> composite(bodies.size());
  for (std::size_t b = 0; b < bodies.size(); ++b) composite[b] = bodies[b].inertia;
  for (std::size_t b = bodies.size() - 1; b >= 1; --b)
    composite[bodies[b].parent] = composite[bodies[b].parent] + composite[b].transformed(local_[b]);

  MatX H = MatX::Zero(n, n);
  H.topLeftCorner<6, 6>() = composite[0].matrix();
  for (std::size_t b = bodies.size() - 1; b >= 1; --b) {
    const int i = 6 + bodies[b].dof;
    SpatialForce f = inertia_apply(composite[b], axis_motion(bodies[b].axis, 1.0));
    H(i, i) = f.moment.dot(bodies[b].axis);
    int j = static_cast<int>(b);
    while (bodies[j].parent >= 0) {
      f = transform_force(local_[j], f);
      j = bodies[j].parent;
      if (j == 0) {
        H.block<6, 1>(0, i) = f.vector();
        H.block<1, 6>(i, 0) = f.vector().transpose();
      } else {
        const int k = 6 + bodies[j].dof;
        H(k, i) = H(i, k) = f.moment.dot(bodies[j].axis);
      }
    }
  }
  return H;
}

VecX Evaluator::inverse_dynamics(const VecX& qdd, const Vec3& gravity) const {
  const auto& bodies = model_->bodies();
  std::vector<SpatialMotion> acc(bodies.size());
  std::vector<SpatialForce> force(bodies.size());
  acc[0] = SpatialMotion{qdd.segment<3>(0), Vec3(qdd.segment<3>(3) - pose_[0].rotation.transpose() * gravity)};
  for (std::size_t b = 1; b < bodies.size(); ++b) {
    const model::Body& body = bodies[b];
    acc[b] = inverse_transform_motion(local_[b], acc[body.parent]) + axis_motion(body.axis, qdd[6 + body.dof]) +
             cross(vel_[b], axis_motion(body.axis, qdot_[6 + body.dof]));
  }
  for (std::size_t b = 0; b < bodies.size(); ++b)
    force[b] = inertia_apply(bodies[b].inertia, acc[b]) + cross(vel_[b], inertia_apply(bodies[b].inertia, vel_[b]));

  VecX tau(model_->num_velocities());
  for (std::size_t b = bodies.size() - 1; b >= 1; --b) {
    tau[6 + bodies[b].dof] = force[b].moment.dot(bodies[b].axis);
    force[bodies[b].parent] += transform_force(local_[b], force[b]);
  }
  tau.head<6>() = force[0].vector();
  return tau;
}

VecX Evaluator::bias_forces(const Vec3& gravity) const {
  return inverse_dynamics(VecX::Zero(model_->num_velocities()), gravity);
}

Vec3 Evaluator::com() const {
  const auto& bodies = model_->bodies();
  Vec3 sum = Vec3::Zero();
  for (std::size_t b = 0; b < bodies.size(); ++b) sum += bodies[b].inertia.mass * pose_[b].apply(bodies[b].inertia.com);
  return sum / model_->total_mass();
}

Mat3X Evaluator::com_jacobian() const {
  const auto& bodies = model_->bodies();
  Mat6X J = Mat6X::Zero(6, model_->num_velocities());
  const double M = model_->total_mass();
  for (std::size_t b = 0; b < bodies.size(); ++b)
    point_jacobian(static_cast<int>(b), pose_[b].apply(bodies[b].inertia.com), J, bodies[b].inertia.mass / M);
  return J.bottomRows<3>();
}

Vec3 Evaluator::com_jacobian_dot_qdot() const {
  const auto& bodies = model_->bodies();
  Vec3 sum = Vec3::Zero();
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    const FrameRef f{static_cast<int>(b), Transform::from_translation(bodies[b].inertia.com)};
    sum += bodies[b].inertia.mass * jacobian_dot_qdot(f).tail<3>();
  }
  return sum / model_->total_mass();
}

Vec3 Evaluator::linear_momentum() const {
  const auto& bodies = model_->bodies();
  Vec3 p = Vec3::Zero();
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    const SpatialMotion& v = vel_[b];
    p += bodies[b].inertia.mass * (pose_[b].rotation * (v.linear + v.angular.cross(bodies[b].inertia.com)));
  }
  return p;
}

double Evaluator::kinetic_energy() const {
  const auto& bodies = model_->bodies();
  double e = 0.0;
  for (std::size_t b = 0; b < bodies.size(); ++b) e += 0.5 * spatial::dot(inertia_apply(bodies[b].inertia, vel_[b]), vel_[b]);
  return e;
}

double Evaluator::potential_energy(const Vec3& gravity) const {
  return -model_->total_mass() * gravity.dot(com());
}

// ---------------------------------------------------------------------------

MatX mass_matrix(const RobotModel& m, const Configuration& q) {
  Evaluator ev(m);
  ev.update(q);
  return ev.mass_matrix();
}

VecX bias_forces(const RobotModel& m, const Configuration& q, const Vec3& gravity) {
  Evaluator ev(m);
  ev.update(q);
  return ev.bias_forces(gravity);
}

VecX inverse_dynamics(const RobotModel& m, const Configuration& q, const VecX& qdd, const Vec3& gravity) {
  Evaluator ev(m);
  ev.update(q);
  return ev.inverse_dynamics(qdd, gravity);
}

Mat6X frame_jacobian(const RobotModel& m, const Configuration& q, const std::string& frame) {
  const FrameRef f = m.frame(frame);
  Evaluator ev(m);
  ev.update(q);
  return ev.jacobian(f);
}

Vec6 frame_jacobian_dot_qdot(const RobotModel& m, const Configuration& q, const std::string& frame) {
  const FrameRef f = m.frame(frame);
  Evaluator ev(m);
  ev.update(q);
  return ev.jacobian_dot_qdot(f);
}

Transform frame_pose(const RobotModel& m, const Configuration& q, const std::string& frame) {
  const FrameRef f = m.frame(frame);
  Evaluator ev(m);
  ev.update(q);
  return ev.frame_pose(f);
}

Vec3 com_position(const RobotModel& m, const Configuration& q) {
  Evaluator ev(m);
  ev.update(q);
  return ev.com();
}

Mat3X com_jacobian(const RobotModel& m, const Configuration& q) {
  Evaluator ev(m);
  ev.update(q);
  return ev.com_jacobian();
}

DynamicsQuantities dynamics_quantities(const RobotModel& m, const Configuration& q,
                                       const std::vector<std::string>& active_contacts, const Vec3& gravity) {
  Evaluator ev(m);
  ev.update(q);
  DynamicsQuantities d;
  d.H = ev.mass_matrix();
  d.c = ev.bias_forces(gravity);
  const int nc = static_cast<int>(active_contacts.size());
  d.Jc.resize(6 * nc, m.num_velocities());
  d.Jc_dot_qdot.resize(6 * nc);
  for (int i = 0; i < nc; ++i) {
    const FrameRef f = m.frame(active_contacts[i]);
    d.Jc.middleRows<6>(6 * i) = ev.jacobian(f);
    d.Jc_dot_qdot.segment<6>(6 * i) = ev.jacobian_dot_qdot(f);
  }
  d.com = ev.com();
  d.com_jacobian = ev.com_jacobian();
  return d;
}

ContactQuantities contact_quantities(const MatX& H, const VecX& c, const MatX& Jc, const VecX& Jc_dot_qdot) {
  ContactQuantities out;
  if (Jc.rows() == 0) throw Error("contact_quantities needs at least one active contact");
  const Eigen::JacobiSVD<MatX> svd(Jc);
  out.min_singular_value = svd.singularValues()(svd.singularValues().size() - 1);
  if (Jc.rows() > Jc.cols() || out.min_singular_value < 1e-9 * std::max(1.0, svd.singularValues()(0)))
    throw RankDeficientError(out.min_singular_value);

  const Eigen::LLT<MatX> llt(H);
  const MatX HinvJt = llt.solve(Jc.transpose());
  out.lambda_c_inv = Jc * HinvJt;
  out.lambda_c_inv = 0.5 * (out.lambda_c_inv + out.lambda_c_inv.transpose()).eval();
  const Eigen::LLT<MatX> lam(out.lambda_c_inv);
  if (lam.info() != Eigen::Success) throw RankDeficientError(out.min_singular_value);
  out.lambda_c = lam.solve(MatX::Identity(Jc.rows(), Jc.rows()));
  out.lambda_c = 0.5 * (out.lambda_c + out.lambda_c.transpose()).eval();

  const int na = static_cast<int>(H.rows()) - 6;
  // J H^-1 S^T is the actuated block of (H^-1 J^T)^T.
  out.gamma_c = -out.lambda_c * HinvJt.bottomRows(na).transpose();
  out.h_c = out.lambda_c * (HinvJt.transpose() * c - Jc_dot_qdot);
  return out;
}

ContactQuantities contact_quantities(const RobotModel& m, const Configuration& q,
                                     const std::vector<std::string>& active_contacts, const Vec3& gravity) {
  if (active_contacts.empty()) throw Error("contact_quantities needs at least one active contact");
  const DynamicsQuantities d = dynamics_quantities(m, q, active_contacts, gravity);
  return contact_quantities(d.H, d.c, d.Jc, d.Jc_dot_qdot);
}

VecX forward_dynamics(const RobotModel& m, const Configuration& q, const VecX& tau,
                      const std::vector<std::pair<std::string, SpatialForce>>& external_wrenches,
                      const Vec3& gravity) {
  Evaluator ev(m);
  ev.update(q);
  VecX rhs = -ev.bias_forces(gravity);
  rhs.tail(m.num_actuated()) += tau;
  for (const auto& [name, w] : external_wrenches) rhs += ev.jacobian(m.frame(name)).transpose() * w.vector();
  return ev.mass_matrix().llt().solve(rhs);
}

Configuration integrate(const Configuration& q, const VecX& v, double dt) {
  Configuration out = q;
  const Vec3 w = v.segment<3>(0) * dt;
  const Vec3 u = v.segment<3>(3) * dt;
  const Transform inc{spatial::exp_so3(w), se3_left_jacobian(w) * u};
  out.base_pose = q.base_pose * inc;
  out.base_pose.rotation = spatial::renormalize(out.base_pose.rotation);
  out.joints = q.joints + v.tail(v.size() - 6) * dt;
  out.set_velocity(v);
  return out;
}

VecX difference(const Configuration& q0, const Configuration& q1) {
  const Transform rel = q0.base_pose.inverse() * q1.base_pose;
  const Vec3 w = spatial::log_so3(rel.rotation);
  VecX d(6 + q0.joints.size());
  d.segment<3>(0) = w;
  d.segment<3>(3) = se3_left_jacobian(w).inverse() * rel.translation;
  d.tail(q0.joints.size()) = q1.joints - q0.joints;
  return d;
}

}  // namespace wbstab::rbd
