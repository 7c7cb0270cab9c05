#include "wbstab/stabilizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "wbstab/errors.hpp"

namespace wbstab::stab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VecX constant(int n, double v) { return VecX::Constant(n, v); }

bool psd(const MatX& W) {
  if (W.rows() != W.cols() || !W.allFinite()) return false;
  if ((W - W.transpose()).norm() > 1e-12 * std::max(1.0, W.norm())) return false;
  Eigen::SelfAdjointEigenSolver<MatX> es(W, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, W.norm());
}

// world-aligned rotation error taking R to Rd
Vec3 rotation_error(const Mat3& Rd, const Mat3& R) { return spatial::log_so3(Rd * R.transpose()); }

}  // namespace

TaskSpec TaskSpec::com(double weight, double kp, double kd, double kp_velocity) {
  TaskSpec t;
  t.name = "com";
  t.kind = TaskKind::com;
  t.weight = weight * MatX::Identity(3, 3);
  t.kp = constant(3, kp);
  t.kd = constant(3, kd);
  t.kp_velocity = constant(3, kp_velocity);
  return t;
}

TaskSpec TaskSpec::base_orientation(double weight, double kp, double kd, double kp_velocity) {
  TaskSpec t = com(weight, kp, kd, kp_velocity);
  t.name = "base_orientation";
  t.kind = TaskKind::base_orientation;
  return t;
}

StabilizerConfig StabilizerConfig::defaults(const model::RobotModel& m) {
  StabilizerConfig c;
  const int nc = m.num_contacts();
  c.tasks = {TaskSpec::com(1e2, 25.0, 8.0, 10.0), TaskSpec::base_orientation(1e1, 25.0, 8.0, 10.0)};
  c.torque_weight = 1e-4 * MatX::Identity(m.num_actuated(), m.num_actuated());
  c.disturbance_weight = 1e3 * MatX::Identity(6 * nc, 6 * nc);
  c.set_force_gain(-1000.0, nc);
  for (const auto& fc : m.contacts()) c.foot_half_extents.push_back(fc.half_extents);
  c.velocity_limits = m.velocity_limits();
  return c;
}

void StabilizerConfig::set_force_gain(double k, int n_contacts) {
  force_gain = k * MatX::Identity(6 * n_contacts, 6 * n_contacts);
}

void StabilizerConfig::check(const model::RobotModel& m, int nc) const {
  const int na = m.num_actuated();
  for (const TaskSpec& t : tasks) {
    const int k = t.dim();
    if (t.weight.rows() != k || !psd(t.weight)) throw ValidationError("task '" + t.name + "' weight must be PSD " +
                                                                      std::to_string(k) + "x" + std::to_string(k));
    for (const VecX* g : {&t.kp, &t.kd, &t.kp_velocity})
      if (g->size() != k || (g->array() < 0.0).any() || !g->allFinite())
        throw ValidationError("task '" + t.name + "' gains must be nonnegative, one per axis");
    if (t.kind == TaskKind::frame) m.frame(t.frame);
  }
  if (torque_weight.rows() != na || !psd(torque_weight)) throw ValidationError("torque weight must be PSD n_a x n_a");
  if (disturbance_weight.rows() != 6 * nc || !psd(disturbance_weight))
    throw ValidationError("disturbance weight must be PSD 6n_c x 6n_c");
  if (force_gain.rows() != 6 * nc || force_gain.cols() != 6 * nc || !force_gain.allFinite())
    throw ValidationError("force gain must be 6n_c x 6n_c");
  {
    const MatX sym = 0.5 * (force_gain + force_gain.transpose());
    Eigen::SelfAdjointEigenSolver<MatX> es(sym, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().maxCoeff() < 0.0)) throw ValidationError("force gain K must be negative definite");
  }
  if (!(friction_mu > 0.0)) throw ValidationError("friction_mu must be positive");
  if (!(min_normal_force >= 0.0)) throw ValidationError("minimum normal force must be nonnegative");
  if (static_cast<int>(foot_half_extents.size()) != m.num_contacts())
    throw ValidationError("foot geometry needs one rectangle per model contact");
  for (const Vec2& h : foot_half_extents)
    if (!(h.minCoeff() > 0.0)) throw ValidationError("foot half extents must be positive");
  if (velocity_limits.size() != na || !(velocity_limits.array() > 0.0).all())
    throw ValidationError("velocity limits must be positive, one per joint");
  if (!(control_dt > 0.0)) throw ValidationError("control_dt must be positive");
  if (!(force_error_cutoff_hz > 0.0)) throw ValidationError("force error cutoff must be positive");
}

TickQuantities tick_quantities(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                               const StabilizerConfig& cfg) {
  if (refs.contacts.empty()) throw ValidationError("at least one active contact is required");
  rbd::Evaluator ev(m);
  ev.update(q);
  TickQuantities t;
  const int nv = m.num_velocities();
  const int nc = static_cast<int>(refs.contacts.size());
  t.contacts = refs.contacts;
  t.H = ev.mass_matrix();
  t.c = ev.bias_forces();
  t.Jc.resize(6 * nc, nv);
  t.Jc_dot_qdot.resize(6 * nc);
  for (int i = 0; i < nc; ++i) {
    const auto idx = m.contact_index(refs.contacts[i]);
    if (!idx) throw UnknownFrameError(refs.contacts[i]);
    const model::FrameRef f = m.frame(refs.contacts[i]);
    t.contact_index.push_back(*idx);
    t.contact_pose.push_back(ev.frame_pose(f));
    t.Jc.middleRows(6 * i, 6) = ev.jacobian(f);
    t.Jc_dot_qdot.segment<6>(6 * i) = ev.jacobian_dot_qdot(f);
  }
  const VecX v = q.velocity();
  t.com = ev.com();
  t.Jcom = ev.com_jacobian();
  t.com_velocity = t.Jcom * v;
  t.com_dot_qdot = ev.com_jacobian_dot_qdot();
  t.base_rotation = q.base_pose.rotation;
  t.base_angular_velocity = q.base_pose.rotation * v.head<3>();
  for (const TaskSpec& task : cfg.tasks) {
    if (task.kind != TaskKind::frame) continue;
    const model::FrameRef f = m.frame(task.frame);
    t.frame_jacobian[task.frame] = ev.jacobian(f);
    t.frame_dot_qdot[task.frame] = ev.jacobian_dot_qdot(f);
    t.frame_pose[task.frame] = ev.frame_pose(f);
    t.frame_velocity[task.frame] = ev.frame_velocity(f);
  }
  return t;
}

void contact_wrench_rows(const Mat3& R, const Vec2& h, double mu, double f_min, MatX& C, VecX& d) {
  // local rows over (n_x, n_y, n_z, f_x, f_y, f_z)
  const double mt = mu / std::sqrt(2.0);
  const double yaw = 2.0 / 3.0 * mu * std::min(h.x(), h.y());
  Eigen::Matrix<double, 11, 6> L = Eigen::Matrix<double, 11, 6>::Zero();
  Eigen::Matrix<double, 11, 1> r = Eigen::Matrix<double, 11, 1>::Zero();
  L(0, 5) = -1.0;
  r(0) = -f_min;
  L(1, 3) = 1.0, L(1, 5) = -mt;
  L(2, 3) = -1.0, L(2, 5) = -mt;
  L(3, 4) = 1.0, L(3, 5) = -mt;
  L(4, 4) = -1.0, L(4, 5) = -mt;
  L(5, 0) = 1.0, L(5, 5) = -h.y();
  L(6, 0) = -1.0, L(6, 5) = -h.y();
  L(7, 1) = 1.0, L(7, 5) = -h.x();
  L(8, 1) = -1.0, L(8, 5) = -h.x();
  L(9, 2) = 1.0, L(9, 5) = -yaw;
  L(10, 2) = -1.0, L(10, 5) = -yaw;
  C.resize(11, 6);
  C.leftCols<3>() = L.leftCols<3>() * R.transpose();
  C.rightCols<3>() = L.rightCols<3>() * R.transpose();
  d = r;
}

namespace {

void check_rank(const MatX& Jc) {
  Eigen::ColPivHouseholderQR<MatX> qr(Jc.transpose());
  const VecX diag = qr.matrixQR().diagonal().cwiseAbs();
  const double smallest = diag.minCoeff();
  if (smallest <= 1e-9 * std::max(1.0, diag.maxCoeff())) throw RankDeficientError(smallest);
}

qp::QpSolution solve(const qp::QpProblem& p, const std::vector<int>* warm) {
  qp::Solver s;
  return warm ? s.solve(p, *warm) : s.solve(p);
}

}  // namespace

ReferenceForce reference_force(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                               const StabilizerConfig& cfg) {
  return reference_force(tick_quantities(m, q, refs, cfg), m, refs, cfg);
}

ReferenceForce reference_force(const TickQuantities& tq, const model::RobotModel& m, const References& refs,
                               const StabilizerConfig& cfg, const std::vector<int>* warm) {
  const int nv = m.num_velocities();
  const int na = m.num_actuated();
  const int nc = static_cast<int>(tq.contacts.size());
  const int nf = 6 * nc;
  const int n = nv + na + nf;
  check_rank(tq.Jc);

  std::vector<qp::LsqTask> tasks;
  for (const TaskSpec& t : cfg.tasks) {
    qp::LsqTask L;
    L.Q = t.weight;
    L.J = MatX::Zero(t.dim(), n);
    if (t.kind == TaskKind::com) {
      L.J.leftCols(nv) = tq.Jcom;
      const Vec3 a = refs.com_acceleration + t.kd.cwiseProduct(refs.com_velocity - tq.com_velocity) +
                     t.kp.cwiseProduct(refs.com_position - tq.com);
      L.r = a - tq.com_dot_qdot;
    } else if (t.kind == TaskKind::base_orientation) {
      L.J.leftCols<3>() = tq.base_rotation;
      L.r = refs.base_angular_acceleration + t.kd.cwiseProduct(refs.base_angular_velocity - tq.base_angular_velocity) +
            t.kp.cwiseProduct(rotation_error(refs.base_rotation, tq.base_rotation));
    } else {
      const auto it = refs.frames.find(t.frame);
      if (it == refs.frames.end()) throw ValidationError("no reference for task frame '" + t.frame + "'");
      const FrameReference& fr = it->second;
      const Transform& X = tq.frame_pose.at(t.frame);
      Vec6 err;
      err << rotation_error(fr.pose.rotation, X.rotation), fr.pose.translation - X.translation;
      L.J.leftCols(nv) = tq.frame_jacobian.at(t.frame);
      L.r = fr.acceleration.vector() + t.kd.cwiseProduct(fr.velocity.vector() - tq.frame_velocity.at(t.frame).vector()) +
            t.kp.cwiseProduct(err) - tq.frame_dot_qdot.at(t.frame);
    }
    tasks.push_back(std::move(L));
  }
  {
    qp::LsqTask L;
    L.J = MatX::Zero(na, n);
    L.J.middleCols(nv, na).setIdentity();
    L.r = VecX::Zero(na);
    L.Q = cfg.torque_weight;
    tasks.push_back(std::move(L));
  }
  qp::QpProblem p = qp::weighted_lsq_to_qp(tasks, n);

  // H qdd - S'tau - J'F = -c ;  J qdd = -Jdot qdot
  p.A = MatX::Zero(nv + nf, n);
  p.b.resize(nv + nf);
  p.A.topLeftCorner(nv, nv) = tq.H;
  p.A.block(6, nv, na, na) = -MatX::Identity(na, na);
  p.A.topRightCorner(nv, nf) = -tq.Jc.transpose();
  p.A.bottomLeftCorner(nf, nv) = tq.Jc;
  p.b.head(nv) = -tq.c;
  p.b.tail(nf) = -tq.Jc_dot_qdot;

  p.C = MatX::Zero(11 * nc, n);
  p.d.resize(11 * nc);
  for (int i = 0; i < nc; ++i) {
    MatX Ci;
    VecX di;
    contact_wrench_rows(tq.contact_pose[i].rotation, cfg.foot_half_extents[tq.contact_index[i]], cfg.friction_mu,
                        cfg.min_normal_force, Ci, di);
    p.C.block(11 * i, nv + na + 6 * i, 11, 6) = Ci;
    p.d.segment(11 * i, 11) = di;
  }
  p.lower = constant(n, -kInf);
  p.upper = constant(n, kInf);
  const VecX lim = m.torque_limits();
  p.lower.segment(nv, na) = -lim;
  p.upper.segment(nv, na) = lim;

  const qp::QpSolution s = solve(p, warm);
  ReferenceForce out;
  out.status = s.status;
  out.iterations = s.iterations;
  out.kkt_residual = s.kkt_residual;
  out.active_set = s.active_set;
  if (s.status == qp::QpStatus::infeasible) throw InfeasibleError("reference force QP is infeasible");
  out.qdd = s.x.head(nv);
  out.tau = s.x.segment(nv, na);
  out.F = s.x.tail(nf);

  VecX dyn = tq.H * out.qdd + tq.c - tq.Jc.transpose() * out.F;
  dyn.tail(na) -= out.tau;
  out.dynamics_residual = dyn.norm() / std::max(1.0, tq.c.norm());
  out.contact_residual = (tq.Jc * out.qdd + tq.Jc_dot_qdot).norm() / std::max(1.0, tq.Jc_dot_qdot.norm());
  out.cone_violation = std::max(0.0, (p.C.rightCols(nf) * out.F - p.d).maxCoeff());
  return out;
}

VelocityIk velocity_ik(const TickQuantities& tq, const model::RobotModel& m, const model::Configuration& q,
                       const References& refs, const StabilizerConfig& cfg, const VecX& rhs, bool free_delta,
                       const std::vector<int>* warm) {
  (void)q;
  const int nv = m.num_velocities();
  const int na = m.num_actuated();
  const int nf = static_cast<int>(tq.Jc.rows());
  if (rhs.size() != nf) throw ValidationError("contact velocity target has the wrong size");
  const int n = nv + (free_delta ? nf : 0);

  std::vector<qp::LsqTask> tasks;
  for (const TaskSpec& t : cfg.tasks) {
    qp::LsqTask L;
    L.Q = t.weight;
    L.J = MatX::Zero(t.dim(), n);
    if (t.kind == TaskKind::com) {
      L.J.leftCols(nv) = tq.Jcom;
      L.r = refs.com_velocity + t.kp_velocity.cwiseProduct(refs.com_position - tq.com);
    } else if (t.kind == TaskKind::base_orientation) {
      L.J.leftCols<3>() = tq.base_rotation;
      L.r = refs.base_angular_velocity +
            t.kp_velocity.cwiseProduct(rotation_error(refs.base_rotation, tq.base_rotation));
    } else {
      const FrameReference& fr = refs.frames.at(t.frame);
      const Transform& X = tq.frame_pose.at(t.frame);
      Vec6 err;
      err << rotation_error(fr.pose.rotation, X.rotation), fr.pose.translation - X.translation;
      L.J.leftCols(nv) = tq.frame_jacobian.at(t.frame);
      L.r = fr.velocity.vector() + t.kp_velocity.cwiseProduct(err);
    }
    tasks.push_back(std::move(L));
  }
  if (free_delta) {
    qp::LsqTask L;
    L.J = MatX::Zero(nf, n);
    L.J.rightCols(nf).setIdentity();
    L.r = VecX::Zero(nf);
    L.Q = cfg.disturbance_weight;
    tasks.push_back(std::move(L));
  }
  qp::QpProblem p = qp::weighted_lsq_to_qp(tasks, n);
  p.A = MatX::Zero(nf, n);
  p.A.leftCols(nv) = tq.Jc;
  if (free_delta) p.A.rightCols(nf) = -MatX::Identity(nf, nf);
  p.b = rhs;
  p.C.resize(0, n);
  p.d.resize(0);
  p.lower = constant(n, -kInf);
  p.upper = constant(n, kInf);
  p.lower.segment(6, na) = -cfg.velocity_limits;
  p.upper.segment(6, na) = cfg.velocity_limits;

  const qp::QpSolution s = solve(p, warm);
  VelocityIk out;
  out.status = s.status;
  out.iterations = s.iterations;
  out.kkt_residual = s.kkt_residual;
  out.active_set = s.active_set;
  if (s.status == qp::QpStatus::infeasible) throw InfeasibleError("tracking QP is infeasible");
  out.v = s.x.head(nv);
  if (free_delta) out.delta = s.x.tail(nf);
  VecX r = tq.Jc * out.v - rhs;
  if (free_delta) r -= out.delta;
  out.constraint_residual = r.norm() / std::max(1.0, rhs.norm());
  return out;
}

StabilizerState init(const model::RobotModel& m, const model::Configuration& q0) {
  if (q0.joints.size() != m.num_actuated()) throw ValidationError("configuration does not match the model");
  StabilizerState s;
  s.q_cmd = q0.joints;
  return s;
}

Vec2 centre_of_pressure(const Transform& frame, const spatial::SpatialForce& w) {
  const Vec3 n = frame.rotation.transpose() * w.moment;
  const Vec3 f = frame.rotation.transpose() * w.force;
  if (f.z() < 1.0) return Vec2::Zero();
  return Vec2(-n.y() / f.z(), n.x() / f.z());
}

TrackResult track(const model::RobotModel& m, const model::Configuration& q, const References& refs,
                  const StabilizerConfig& cfg, const StabilizerState& state, const VecX& F_meas) {
  const auto start = std::chrono::steady_clock::now();
  const int nc = static_cast<int>(refs.contacts.size());
  const int nf = 6 * nc;
  const int na = m.num_actuated();
  if (F_meas.size() != nf) throw ValidationError("measured wrench stack has the wrong size");
  if (state.q_cmd.size() != na) throw ValidationError("stabilizer state is not initialized");
  if (refs.force_offset.size() != 0 && refs.force_offset.size() != nf)
    throw ValidationError("force offset has the wrong size");
  if (cfg.force_gain.rows() != nf) throw ValidationError("force gain does not match the active contacts");

  const TickQuantities tq = tick_quantities(m, q, refs, cfg);
  const ReferenceForce rf = reference_force(tq, m, refs, cfg, state.warm11.empty() ? nullptr : &state.warm11);

  TrackResult out;
  StabilizerState& st = out.state;
  st = state;
  st.F_ID = rf.F;
  if (refs.force_offset.size() == nf) st.F_ID += refs.force_offset;
  const VecX e = F_meas - st.F_ID;
  if (st.filtered_error.size() != nf) st.filtered_error = VecX::Zero(nf);
  const double alpha = cfg.control_dt / (cfg.control_dt + 1.0 / (2.0 * M_PI * cfg.force_error_cutoff_hz));
  st.filtered_error += alpha * (e - st.filtered_error);

  // -Lambda^-1 K^-1 e_F with Lambda^-1 = J H^-1 J'
  const MatX HinvJt = tq.H.llt().solve(tq.Jc.transpose());
  const MatX mobility = tq.Jc * HinvJt;
  const VecX rhs = -mobility * cfg.force_gain.partialPivLu().solve(st.filtered_error);

  const VelocityIk ik = velocity_ik(tq, m, q, refs, cfg, rhs, true, state.warm15.empty() ? nullptr : &state.warm15);
  st.warm11 = rf.active_set;
  st.warm15 = ik.active_set;

  out.q_cmd = (state.q_cmd + cfg.control_dt * ik.v.tail(na)).cwiseMax(m.lower_limits()).cwiseMin(m.upper_limits());
  st.q_cmd = out.q_cmd;

  Diagnostics& d = out.diag;
  d.F_ID = st.F_ID;
  d.e_F = e;
  d.e_F_filtered = st.filtered_error;
  d.admittance_rhs = rhs;
  d.delta = ik.delta;
  d.v = ik.v;
  d.qp11_status = rf.status;
  d.qp15_status = ik.status;
  d.kkt11 = rf.kkt_residual;
  d.kkt15 = ik.kkt_residual;
  d.residual11b = rf.dynamics_residual;
  d.residual11c = rf.contact_residual;
  d.residual15b = ik.constraint_residual;
  for (int i = 0; i < nc; ++i)
    d.cop.push_back(centre_of_pressure(tq.contact_pose[i], spatial::SpatialForce::from_vector(F_meas.segment<6>(6 * i))));

  if (rf.status != qp::QpStatus::optimal || ik.status != qp::QpStatus::optimal)
    throw QpCheckError("stabilizer QP stopped at the iteration limit");
  if (rf.kkt_residual > cfg.kkt_tolerance || ik.kkt_residual > cfg.kkt_tolerance)
    throw QpCheckError("stabilizer QP KKT residual above tolerance (" + std::to_string(std::max(rf.kkt_residual, ik.kkt_residual)) +
                ")");
  if (rf.dynamics_residual > cfg.residual_tolerance || rf.contact_residual > cfg.residual_tolerance)
    throw QpCheckError("reference force violates the dynamics equalities");
  if (ik.constraint_residual > cfg.kkt_tolerance) throw QpCheckError("admittance constraint residual above tolerance");
  if (cfg.measure_time)
    d.solve_time_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  return out;
}

References hold_references(const model::RobotModel& m, const model::Configuration& q,
                           const std::vector<std::string>& contacts) {
  References r;
  r.com_position = rbd::com_position(m, q);
  r.base_rotation = q.base_pose.rotation;
  r.contacts = contacts;
  return r;
}

}  // namespace wbstab::stab
