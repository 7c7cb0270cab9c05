#include "wbstab/baseline.hpp"

#include <algorithm>
#include <cmath>

#include "wbstab/errors.hpp"

namespace wbstab::zmp {

void ZmpGains::check() const {
  if (!(k_zmp > 0.0) || !(k_fz > 0.0) || !(k_ankle >= 0.0) || !(lip_omega > 0.0)) throw ValidationError("ZMP gains must be positive");
  if (!(com_clamp > 0.0) || !(foot_clamp > 0.0)) throw ValidationError("ZMP clamps must be positive");
  if (!(zmp_filter_hz > 0.0)) throw ValidationError("ZMP filter cutoff must be positive");
}

Vec2 measure_zmp(const std::vector<SpatialForce>& wrenches, const std::vector<Transform>& poses) {
  if (wrenches.size() != poses.size()) throw ValidationError("one pose per wrench is required");
  double fz = 0.0;
  Vec2 num = Vec2::Zero();
  for (std::size_t i = 0; i < wrenches.size(); ++i) {
    const Vec3& p = poses[i].translation;
    const SpatialForce& w = wrenches[i];
    fz += w.force.z();
    num.x() += p.x() * w.force.z() - w.moment.y();
    num.y() += p.y() * w.force.z() + w.moment.x();
  }
  if (!(fz > 20.0)) throw Error("insufficient normal force for a ZMP");
  return num / fz;
}

double load_share(const Vec2& zmp_ref, const Vec3& left, const Vec3& right) {
  const Vec2 d = left.head<2>() - right.head<2>();
  if (d.squaredNorm() < 1e-12) return 0.5;
  return std::clamp((zmp_ref - right.head<2>()).dot(d) / d.squaredNorm(), 0.0, 1.0);
}

ZmpOutput zmp_stabilize(const ZmpState& state, const ZmpGains& gains, const Vec2& zmp_meas, const Vec2& zmp_ref,
                        const Vec3& com_ref, const std::vector<SpatialForce>& wrenches,
                        const std::vector<Transform>& poses, double dt) {
  const int nc = static_cast<int>(wrenches.size());
  ZmpOutput out;
  out.state = state;
  ZmpState& s = out.state;
  if (s.foot_height_offsets.size() != nc) s.foot_height_offsets = VecX::Zero(nc);
  if (!s.primed) s.zmp_filter = zmp_meas;
  const double alpha = dt / (dt + 1.0 / (2.0 * M_PI * gains.zmp_filter_hz));
  s.zmp_filter += alpha * (zmp_meas - s.zmp_filter);
  s.primed = true;

  // CoM reference moves toward the measured ZMP
  const Vec2 com_next = (s.com_offset + dt * gains.k_zmp * (s.zmp_filter - zmp_ref))
                            .cwiseMax(Vec2::Constant(-gains.com_clamp))
                            .cwiseMin(Vec2::Constant(gains.com_clamp));
  s.com_offset = com_next;
  out.com_ref = com_ref;
  out.com_ref.head<2>() += s.com_offset;

  out.foot_height_rates = VecX::Zero(nc);
  if (nc >= 2) {
    const double total = wrenches[0].force.z() + wrenches[1].force.z();
    const double share = load_share(zmp_ref, poses[0].translation, poses[1].translation);
    const double df_ref = (2.0 * share - 1.0) * total;
    const double rate = gains.k_fz * (wrenches[0].force.z() - wrenches[1].force.z() - df_ref);
    // the overloaded foot rises, the other lowers
    for (int i = 0; i < 2; ++i) {
      const double r = i == 0 ? rate : -rate;
      const double next = std::clamp(s.foot_height_offsets[i] + dt * r, -gains.foot_clamp, gains.foot_clamp);
      out.foot_height_rates[i] = (next - s.foot_height_offsets[i]) / dt;
      s.foot_height_offsets[i] = next;
    }
  }
  // ZMP distribution: every foot's centre of pressure is shifted by the offset
  // of the reference from the load-weighted foot centroid
  out.foot_tilt_rates = VecX::Zero(2 * nc);
  Vec2 centroid = poses[0].translation.head<2>();
  if (nc >= 2) {
    const double a = load_share(zmp_ref, poses[0].translation, poses[1].translation);
    centroid = a * poses[0].translation.head<2>() + (1.0 - a) * poses[1].translation.head<2>();
  }
  const Vec2 d = zmp_ref - centroid;
  for (int i = 0; i < nc; ++i) {
    const double fz = wrenches[i].force.z();
    const Vec2 n_ref(d.y() * fz, -d.x() * fz);
    out.foot_tilt_rates.segment<2>(2 * i) = gains.k_ankle * (wrenches[i].moment.head<2>() - n_ref);
  }
  out.foot_height_offsets = s.foot_height_offsets;
  return out;
}

BaselineTick baseline_track(const model::RobotModel& m, const model::Configuration& q, const stab::References& refs,
                            const stab::StabilizerConfig& cfg, const ZmpGains& gains, const ZmpState& state,
                            const VecX& q_cmd, const std::vector<SpatialForce>& wrenches,
                            const std::vector<int>* warm) {
  const stab::TickQuantities tq = stab::tick_quantities(m, q, refs, cfg);
  const int nc = static_cast<int>(refs.contacts.size());
  if (static_cast<int>(wrenches.size()) != nc) throw ValidationError("one wrench per active contact is required");

  BaselineTick out;
  // desired ZMP of the modified CoM reference held at rest
  out.zmp_ref = refs.com_position.head<2>() + state.com_offset;
  out.zmp_meas = measure_zmp(wrenches, tq.contact_pose);
  const ZmpOutput z =
      zmp_stabilize(state, gains, out.zmp_meas, out.zmp_ref, refs.com_position, wrenches, tq.contact_pose, cfg.control_dt);
  out.state = z.state;
  out.com_ref = z.com_ref;

  stab::References r = refs;
  r.com_position = z.com_ref;
  VecX rhs = VecX::Zero(6 * nc);
  for (int i = 0; i < nc; ++i) {
    rhs.segment<2>(6 * i) = z.foot_tilt_rates.segment<2>(2 * i);
    rhs[6 * i + 5] = z.foot_height_rates[i];
  }
  out.ik = stab::velocity_ik(tq, m, q, r, cfg, rhs, false, warm);
  if (out.ik.status != qp::QpStatus::optimal) throw QpCheckError("baseline tracking QP stopped at the iteration limit");
  if (out.ik.kkt_residual > cfg.kkt_tolerance) throw QpCheckError("baseline tracking QP KKT residual above tolerance");
  const int na = m.num_actuated();
  out.q_cmd = (q_cmd + cfg.control_dt * out.ik.v.tail(na)).cwiseMax(m.lower_limits()).cwiseMin(m.upper_limits());
  return out;
}

}  // namespace wbstab::zmp
