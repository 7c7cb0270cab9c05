#include "wbstab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "wbstab/errors.hpp"
#include "wbstab/plot.hpp"
#include "wbstab/text.hpp"

namespace wbstab::runner {

namespace {

using spatial::Transform;

constexpr double kDeg = M_PI / 180.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("expected a boolean, got '" + v + "'");
}

double number(const std::string& v) {
  try {
    return text::parse_double(v, 0);
  } catch (const ParseError&) {
    throw ValidationError("expected a number, got '" + v + "'");
  }
}

using Setter = std::function<void(ScenarioConfig&, const std::string&)>;
using Getter = std::function<std::string(const ScenarioConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

Field real(double ScenarioConfig::*p) {
  return {[p](ScenarioConfig& c, const std::string& v) { c.*p = number(v); },
          [p](const ScenarioConfig& c) { return text::format_double(c.*p); }};
}

Field flag(bool ScenarioConfig::*p) {
  return {[p](ScenarioConfig& c, const std::string& v) { c.*p = parse_bool(v); },
          [p](const ScenarioConfig& c) { return std::string(c.*p ? "true" : "false"); }};
}

// ordered for serialize()
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = {
      {"name", {[](ScenarioConfig& c, const std::string& v) { c.name = v; }, [](const ScenarioConfig& c) { return c.name; }}},
      {"model", {[](ScenarioConfig& c, const std::string& v) { c.model = v; }, [](const ScenarioConfig& c) { return c.model; }}},
      {"stabilizer",
       {[](ScenarioConfig& c, const std::string& v) {
          if (v == "proposed") c.stabilizer = StabilizerKind::proposed;
          else if (v == "zmp") c.stabilizer = StabilizerKind::zmp;
          else if (v == "none") c.stabilizer = StabilizerKind::none;
          else throw ValidationError("stabilizer must be proposed, zmp or none");
        },
        [](const ScenarioConfig& c) { return std::string(to_string(c.stabilizer)); }}},
      {"scenario",
       {[](ScenarioConfig& c, const std::string& v) {
          if (v == "flat") c.scenario = ScenarioKind::flat;
          else if (v == "coupled") c.scenario = ScenarioKind::coupled;
          else if (v == "independent") c.scenario = ScenarioKind::independent;
          else if (v == "drop") c.scenario = ScenarioKind::drop;
          else throw ValidationError("scenario must be flat, coupled, independent or drop");
        },
        [](const ScenarioConfig& c) { return std::string(to_string(c.scenario)); }}},
      {"height_amplitude", real(&ScenarioConfig::height_amplitude)},
      {"attitude_amplitude_deg", real(&ScenarioConfig::attitude_amplitude_deg)},
      {"attitude_rate_deg", real(&ScenarioConfig::attitude_rate_deg)},
      {"ramp_time", real(&ScenarioConfig::ramp_time)},
      {"drop", real(&ScenarioConfig::drop)},
      {"tilt_deg", real(&ScenarioConfig::tilt_deg)},
      {"t_event", real(&ScenarioConfig::t_event)},
      {"duration", real(&ScenarioConfig::duration)},
      {"control_dt", real(&ScenarioConfig::control_dt)},
      {"sim_dt", real(&ScenarioConfig::sim_dt)},
      {"settle_time", real(&ScenarioConfig::settle_time)},
      {"force_gain", real(&ScenarioConfig::force_gain)},
      {"moment_gain", real(&ScenarioConfig::moment_gain)},
      {"q_d", real(&ScenarioConfig::q_d)},
      {"q_com", real(&ScenarioConfig::q_com)},
      {"q_orientation", real(&ScenarioConfig::q_orientation)},
      {"q_tau", real(&ScenarioConfig::q_tau)},
      {"kp_task", real(&ScenarioConfig::kp_task)},
      {"kd_task", real(&ScenarioConfig::kd_task)},
      {"kp_velocity", real(&ScenarioConfig::kp_velocity)},
      {"min_normal_force", real(&ScenarioConfig::min_normal_force)},
      {"stabilizer_mu", real(&ScenarioConfig::stabilizer_mu)},
      {"force_cutoff_hz", real(&ScenarioConfig::force_cutoff_hz)},
      {"k_zmp", real(&ScenarioConfig::k_zmp)},
      {"k_fz", real(&ScenarioConfig::k_fz)},
      {"k_ankle", real(&ScenarioConfig::k_ankle)},
      {"servo_kp_scale", real(&ScenarioConfig::servo_kp_scale)},
      {"servo_kd_scale", real(&ScenarioConfig::servo_kd_scale)},
      {"servo_ki", real(&ScenarioConfig::servo_ki)},
      {"contact_stiffness", real(&ScenarioConfig::contact_stiffness)},
      {"contact_damping", real(&ScenarioConfig::contact_damping)},
      {"friction_mu", real(&ScenarioConfig::friction_mu)},
      {"force_step", real(&ScenarioConfig::force_step)},
      {"force_step_time", real(&ScenarioConfig::force_step_time)},
      {"perturbation", real(&ScenarioConfig::perturbation)},
      {"seed",
       {[](ScenarioConfig& c, const std::string& v) {
          try {
            std::size_t used = 0;
            c.seed = std::stoull(v, &used);
            if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
          } catch (const std::exception&) {
            throw ValidationError("seed must be an unsigned integer, got '" + v + "'");
          }
        },
        [](const ScenarioConfig& c) { return std::to_string(c.seed); }}},
      {"measure_time", flag(&ScenarioConfig::measure_time)},
      {"stop_on_fall", flag(&ScenarioConfig::stop_on_fall)},
  };
  return f;
}

}  // namespace

const char* to_string(StabilizerKind k) {
  switch (k) {
    case StabilizerKind::proposed: return "proposed";
    case StabilizerKind::zmp: return "zmp";
    case StabilizerKind::none: return "none";
  }
  return "?";
}

const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::flat: return "flat";
    case ScenarioKind::coupled: return "coupled";
    case ScenarioKind::independent: return "independent";
    case ScenarioKind::drop: return "drop";
  }
  return "?";
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::balanced: return "balanced";
    case Outcome::fell: return "fell";
    case Outcome::diverged: return "diverged";
  }
  return "?";
}

void ScenarioConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [k, f] : fields())
    if (k == key) {
      f.set(*this, value);
      return;
    }
  throw ValidationError("unknown config key '" + key + "'");
}

std::string ScenarioConfig::serialize() const {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + "=" + f.get(*this) + "\n";
  return out;
}

void ScenarioConfig::check() const {
  if (!(duration > 0.0)) throw ValidationError("duration must be positive");
  if (!(sim_dt > 0.0) || !(control_dt >= sim_dt)) throw ValidationError("need control_dt >= sim_dt > 0");
  const double ratio = control_dt / sim_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) throw ValidationError("control_dt must be a multiple of sim_dt");
  if (!(settle_time >= 0.0)) throw ValidationError("settle_time must be nonnegative");
  if (!(height_amplitude >= 0.0) || !(attitude_amplitude_deg >= 0.0) || !(attitude_rate_deg >= 0.0))
    throw ValidationError("platform amplitudes and rates must be nonnegative");
  if (!(ramp_time >= 0.0)) throw ValidationError("ramp_time must be nonnegative");
  if (!(drop >= 0.0) || !(t_event >= 0.0)) throw ValidationError("drop and t_event must be nonnegative");
  if (!(force_gain < 0.0)) throw ValidationError("force_gain must be negative");
  if (!(moment_gain <= 0.0)) throw ValidationError("moment_gain must be negative, or zero for force_gain");
  if (!(q_d > 0.0) || !(q_com >= 0.0) || !(q_orientation >= 0.0) || !(q_tau >= 0.0))
    throw ValidationError("task weights must be nonnegative and q_d positive");
  if (!(kp_task >= 0.0) || !(kd_task >= 0.0) || !(kp_velocity >= 0.0)) throw ValidationError("task gains must be nonnegative");
  if (!(min_normal_force >= 0.0) || !(stabilizer_mu > 0.0) || !(force_cutoff_hz > 0.0))
    throw ValidationError("min_normal_force, stabilizer_mu and force_cutoff_hz out of range");
  if (!(k_zmp > 0.0) || !(k_fz > 0.0) || !(k_ankle >= 0.0)) throw ValidationError("ZMP gains out of range");
  if (!(servo_kp_scale >= 0.0) || !(servo_kd_scale >= 0.0) || !(servo_ki >= 0.0))
    throw ValidationError("servo gains must be nonnegative");
  if (!(contact_stiffness > 0.0) || !(contact_damping > 0.0) || !(friction_mu > 0.0))
    throw ValidationError("contact parameters must be positive");
  if (!(perturbation >= 0.0)) throw ValidationError("perturbation must be nonnegative");
  if (!std::isfinite(force_step) || !(force_step_time >= 0.0)) throw ValidationError("invalid force step");
}

ScenarioConfig parse_config(const std::string& s) {
  ScenarioConfig c;
  for (const text::Line& line : text::tokenize(s)) {
    if (!line.words.empty()) throw ParseError(line.number, "expected key=value, got '" + line.words.front() + "'");
    for (const auto& [k, v] : line.values) {
      try {
        c.set(k, v);
      } catch (const ValidationError& e) {
        throw ParseError(line.number, e.what());
      }
    }
  }
  c.check();
  return c;
}

ScenarioConfig load_config(const std::string& path) { return parse_config(text::read_file(path)); }

std::vector<std::string> csv_columns(const model::RobotModel& m, std::size_t n_platforms) {
  std::vector<std::string> c = {"t", "com_x", "com_y", "com_z", "com_ref_x", "com_ref_y", "com_ref_z",
                                "base_qw", "base_qx", "base_qy", "base_qz"};
  static const char* axes[6] = {"nx", "ny", "nz", "fx", "fy", "fz"};
  for (const auto& fc : m.contacts())
    for (const char* kind : {"F", "F_ID", "e_F"})
      for (const char* a : axes) c.push_back(fc.name + "_" + kind + "_" + a);
  for (const auto& fc : m.contacts()) {
    c.push_back(fc.name + "_cop_x");
    c.push_back(fc.name + "_cop_y");
  }
  for (const char* s : {"qp11_status", "qp15_status", "solve_time_us", "zmp_meas_x", "zmp_meas_y", "zmp_ref_x", "zmp_ref_y"})
    c.push_back(s);
  for (std::size_t p = 0; p < n_platforms; ++p)
    for (const char* s : {"height", "roll", "pitch"}) c.push_back("platform" + std::to_string(p) + "_" + s);
  return c;
}

namespace {

int status_code(qp::QpStatus s) { return static_cast<int>(s); }

std::vector<sim::Platform> make_platforms(const ScenarioConfig& cfg, const Vec3& lf, const Vec3& rf) {
  sim::ScenarioShape shape;
  shape.height_amplitude = cfg.height_amplitude;
  shape.attitude_amplitude = cfg.attitude_amplitude_deg * kDeg;
  shape.attitude_rate = cfg.attitude_rate_deg * kDeg;
  shape.ramp_time = cfg.ramp_time;
  switch (cfg.scenario) {
    case ScenarioKind::flat: return sim::scenario_flat();
    case ScenarioKind::coupled: return sim::scenario_coupled(shape);
    case ScenarioKind::independent: return sim::scenario_independent(shape, lf, rf);
    case ScenarioKind::drop: return sim::scenario_drop(cfg.drop, cfg.tilt_deg * kDeg, cfg.t_event, lf, rf);
  }
  throw ValidationError("unknown scenario");
}

stab::StabilizerConfig stabilizer_config(const ScenarioConfig& cfg, const model::RobotModel& m) {
  stab::StabilizerConfig s = stab::StabilizerConfig::defaults(m);
  s.tasks = {stab::TaskSpec::com(cfg.q_com, cfg.kp_task, cfg.kd_task, cfg.kp_velocity),
             stab::TaskSpec::base_orientation(cfg.q_orientation, cfg.kp_task, cfg.kd_task, cfg.kp_velocity)};
  s.torque_weight *= cfg.q_tau / 1e-4;
  s.disturbance_weight = cfg.q_d * MatX::Identity(6 * m.num_contacts(), 6 * m.num_contacts());
  s.set_force_gain(cfg.force_gain, m.num_contacts());
  if (cfg.moment_gain != 0.0)
    for (int i = 0; i < m.num_contacts(); ++i) s.force_gain.diagonal().segment<3>(6 * i).setConstant(cfg.moment_gain);
  s.friction_mu = cfg.stabilizer_mu;
  s.min_normal_force = cfg.min_normal_force;
  s.control_dt = cfg.control_dt;
  s.force_error_cutoff_hz = cfg.force_cutoff_hz;
  s.measure_time = cfg.measure_time;
  s.check(m, m.num_contacts());
  return s;
}

// zero-net-wrench disturbance: +f on contact 0, -f on contact 1, moments
// cancelling the couple about the midpoint
VecX force_step_offset(double f, const std::vector<Transform>& poses) {
  VecX off = VecX::Zero(12);
  const Vec3 d = poses[0].translation - poses[1].translation;
  const Vec3 couple = d.cross(Vec3(0.0, 0.0, f));  // moment of +f at 0 and -f at 1
  off.segment<3>(0) = -0.5 * couple;
  off.segment<3>(6) = -0.5 * couple;
  off[5] = f;
  off[11] = -f;
  return off;
}

}  // namespace

RunSummary run(const ScenarioConfig& cfg, const RunOptions& opt) {
  cfg.check();
  const model::RobotModel m = model::resolve_model(cfg.model);
  if (m.num_contacts() != 2) throw ValidationError("scenarios need a model with exactly two contacts");
  const int na = m.num_actuated();

  model::Configuration q0 = model::biped_default_stance(m);
  if (cfg.perturbation > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-cfg.perturbation, cfg.perturbation);
    for (int i = 0; i < na; ++i) q0.joints[i] += u(rng);
    q0.joints = q0.joints.cwiseMax(m.lower_limits()).cwiseMin(m.upper_limits());
  }
  std::vector<std::string> contacts;
  for (const auto& c : m.contacts()) contacts.push_back(c.name);
  const Vec3 lf = rbd::frame_pose(m, q0, contacts[0]).translation;
  const Vec3 rf = rbd::frame_pose(m, q0, contacts[1]).translation;

  servo::ServoParams sp = servo::default_params(m);
  sp.kp *= cfg.servo_kp_scale;
  sp.kd *= cfg.servo_kd_scale;
  sp.ki = VecX::Constant(na, cfg.servo_ki);
  sim::SimParams simp;
  simp.sim_dt = cfg.sim_dt;
  simp.contact.stiffness = cfg.contact_stiffness;
  simp.contact.damping = cfg.contact_damping;
  simp.contact.friction_mu = cfg.friction_mu;
  sim::World world(m, make_platforms(cfg, lf, rf), sp, simp);

  // servo-only settling before t = 0
  const long settle_ticks = std::lround(cfg.settle_time / cfg.control_dt);
  world.reset(q0, -settle_ticks * cfg.control_dt);
  for (long k = 0; k < settle_ticks && world.status() == sim::SimStatus::ok; ++k) world.step(q0.joints, cfg.control_dt);

  const stab::StabilizerConfig scfg = stabilizer_config(cfg, m);
  zmp::ZmpGains zg;
  zg.k_zmp = cfg.k_zmp;
  zg.k_ankle = cfg.k_ankle;
  zg.k_fz = cfg.k_fz;
  zg.check();

  stab::References refs = stab::hold_references(m, world.state(), contacts);
  const Vec3 nominal_com = refs.com_position;
  stab::StabilizerState st = stab::init(m, world.state());
  zmp::ZmpState zs;
  VecX q_cmd = world.state().joints;
  std::vector<int> warm11, warm15;

  RunSummary sum;
  sum.name = cfg.name;
  const std::vector<std::string> columns = csv_columns(m, world.platforms().size());
  if (opt.csv) {
    for (std::size_t i = 0; i < columns.size(); ++i) *opt.csv << (i ? "," : "") << columns[i];
    *opt.csv << "\n";
  }
  plot::Series series;

  const long ticks = std::lround(cfg.duration / cfg.control_dt);
  double sq_force = 0.0, solve_time = 0.0, final_force = 0.0;
  long final_count = 0;
  double last_step_violation = -1.0, last_event_violation = -1.0;
  if (world.status() != sim::SimStatus::ok) sum.outcome = Outcome::diverged;
  for (long k = 0; k < ticks && sum.outcome != Outcome::diverged; ++k) {
    const model::Configuration& q = world.state();
    const double t = world.time();
    std::vector<spatial::SpatialForce> wrenches = world.measured_wrenches();
    VecX F(12);
    for (int c = 0; c < 2; ++c) F.segment<6>(6 * c) = wrenches[c].vector();

    refs.force_offset.resize(0);
    if (cfg.force_step != 0.0 && t >= cfg.force_step_time - 1e-12) {
      std::vector<Transform> poses = {rbd::frame_pose(m, q, contacts[0]), rbd::frame_pose(m, q, contacts[1])};
      refs.force_offset = force_step_offset(cfg.force_step, poses);
    }

    VecX F_ID = VecX::Zero(12);
    Vec3 com_ref = nominal_com;
    int s11 = -1, s15 = -1;
    Vec2 zmp_meas = Vec2::Zero(), zmp_ref = nominal_com.head<2>();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (cfg.stabilizer == StabilizerKind::proposed) {
        const stab::TrackResult r = stab::track(m, q, refs, scfg, st, F);
        st = r.state;
        q_cmd = r.q_cmd;
        F_ID = r.diag.F_ID;
        s11 = status_code(r.diag.qp11_status);
        s15 = status_code(r.diag.qp15_status);
        sum.max_kkt_residual = std::max({sum.max_kkt_residual, r.diag.kkt11, r.diag.kkt15});
        sum.max_equality_residual =
            std::max({sum.max_equality_residual, r.diag.residual11b, r.diag.residual11c, r.diag.residual15b});
      } else {
        // reference force as a diagnostic, same references as the proposed stabilizer
        const stab::TickQuantities tq = stab::tick_quantities(m, q, refs, scfg);
        const stab::ReferenceForce rf = stab::reference_force(tq, m, refs, scfg, warm11.empty() ? nullptr : &warm11);
        warm11 = rf.active_set;
        F_ID = rf.F;
        if (refs.force_offset.size() == 12) F_ID += refs.force_offset;
        s11 = status_code(rf.status);
        sum.max_kkt_residual = std::max(sum.max_kkt_residual, rf.kkt_residual);
        sum.max_equality_residual = std::max({sum.max_equality_residual, rf.dynamics_residual, rf.contact_residual});
        sum.max_cone_violation = std::max(sum.max_cone_violation, rf.cone_violation);
        if (cfg.stabilizer == StabilizerKind::zmp) {
          const zmp::BaselineTick b =
              zmp::baseline_track(m, q, refs, scfg, zg, zs, q_cmd, wrenches, warm15.empty() ? nullptr : &warm15);
          warm15 = b.ik.active_set;
          zs = b.state;
          q_cmd = b.q_cmd;
          com_ref = b.com_ref;
          zmp_meas = b.zmp_meas;
          zmp_ref = b.zmp_ref;
          s15 = status_code(b.ik.status);
          sum.max_kkt_residual = std::max(sum.max_kkt_residual, b.ik.kkt_residual);
          sum.max_equality_residual = std::max(sum.max_equality_residual, b.ik.constraint_residual);
        }
      }
    } catch (const Error& e) {
      ++sum.controller_errors;
      if (dynamic_cast<const QpCheckError*>(&e) || dynamic_cast<const InfeasibleError*>(&e)) ++sum.qp_errors;
      if (sum.first_error.empty()) sum.first_error = "t=" + fmt(t) + ": " + e.what();
    }
    const double dt_us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    solve_time += dt_us;

    if (cfg.stabilizer != StabilizerKind::zmp) {
      try {
        std::vector<Transform> poses = {rbd::frame_pose(m, q, contacts[0]), rbd::frame_pose(m, q, contacts[1])};
        zmp_meas = zmp::measure_zmp(wrenches, poses);
      } catch (const Error&) {
      }
    }

    const VecX e = F - F_ID;
    const double ef = e.norm();
    const Vec3 com = rbd::com_position(m, q);
    const double com_err = (com - nominal_com).norm();
    const double tilt = std::acos(std::clamp(q.base_pose.rotation(2, 2), -1.0, 1.0));
    sum.max_com_error = std::max(sum.max_com_error, com_err);
    sum.max_base_tilt = std::max(sum.max_base_tilt, tilt);
    sq_force += ef * ef;
    if (t >= cfg.duration - 1.0 - 1e-12) {
      final_force += ef;
      ++final_count;
    }
    if (cfg.force_step != 0.0 && t >= cfg.force_step_time - 1e-12 && ef > 0.1 * std::abs(cfg.force_step))
      last_step_violation = t - cfg.force_step_time;
    if (cfg.scenario == ScenarioKind::drop && t >= cfg.t_event - 1e-12 && ef >= 10.0) last_event_violation = t - cfg.t_event;

    if (opt.csv) {
      std::ostream& os = *opt.csv;
      const Eigen::Quaterniond qb = q.base_quaternion();
      os << fmt(t);
      for (int i = 0; i < 3; ++i) os << ',' << fmt(com[i]);
      for (int i = 0; i < 3; ++i) os << ',' << fmt(com_ref[i]);
      os << ',' << fmt(qb.w()) << ',' << fmt(qb.x()) << ',' << fmt(qb.y()) << ',' << fmt(qb.z());
      for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 6; ++i) os << ',' << fmt(F[6 * c + i]);
        for (int i = 0; i < 6; ++i) os << ',' << fmt(F_ID[6 * c + i]);
        for (int i = 0; i < 6; ++i) os << ',' << fmt(e[6 * c + i]);
      }
      for (int c = 0; c < 2; ++c) {
        const Vec2 cop = stab::centre_of_pressure(rbd::frame_pose(m, q, contacts[c]), wrenches[c]);
        os << ',' << fmt(cop.x()) << ',' << fmt(cop.y());
      }
      os << ',' << s11 << ',' << s15 << ',' << fmt(cfg.measure_time ? dt_us : 0.0);
      os << ',' << fmt(zmp_meas.x()) << ',' << fmt(zmp_meas.y()) << ',' << fmt(zmp_ref.x()) << ',' << fmt(zmp_ref.y());
      for (const sim::Platform& p : world.platforms()) {
        const Vec3 o = p.offsets(t);
        os << ',' << fmt(o[0]) << ',' << fmt(o[1]) << ',' << fmt(o[2]);
      }
      os << '\n';
    }
    if (!opt.svg_path.empty()) {
      series.t.push_back(t);
      series.com_error.push_back(com - nominal_com);
      series.tilt.push_back(tilt);
      series.fz.push_back(Vec2(F[5], F[11]));
      series.fz_ref.push_back(Vec2(F_ID[5], F_ID[11]));
    }

    world.step(q_cmd, cfg.control_dt);
    ++sum.ticks;
    sum.end_time = world.time();
    if (world.status() == sim::SimStatus::diverged) {
      sum.outcome = Outcome::diverged;
      break;
    }
    const model::Configuration& qn = world.state();
    const double zc = rbd::com_position(m, qn).z();
    const double tn = std::acos(std::clamp(qn.base_pose.rotation(2, 2), -1.0, 1.0));
    if (zc < 0.5 * nominal_com.z() || tn > 45.0 * kDeg) {
      sum.outcome = Outcome::fell;
      if (cfg.stop_on_fall) break;
    }
  }

  if (sum.ticks > 0) {
    sum.rms_force_error = std::sqrt(sq_force / sum.ticks);
    sum.mean_solve_time_us = solve_time / sum.ticks;
  }
  if (final_count > 0) sum.final_force_error = final_force / final_count;
  if (cfg.force_step != 0.0) sum.force_settle_time = last_step_violation < 0.0 ? 0.0 : last_step_violation + cfg.control_dt;
  if (cfg.scenario == ScenarioKind::drop && sum.end_time > cfg.t_event)
    sum.event_recovery_time = last_event_violation < 0.0 ? 0.0 : last_event_violation + cfg.control_dt;
  if (!opt.svg_path.empty()) plot::write_svg(opt.svg_path, cfg.name, series);
  return sum;
}

std::vector<RunSummary> sweep(const ScenarioConfig& base, const std::string& param, const std::vector<std::string>& values,
                              unsigned workers) {
  std::vector<RunSummary> out(values.size());
  auto one = [&](std::size_t i) {
    ScenarioConfig c = base;
    c.name = base.name + "_" + param + "=" + values[i];
    try {
      c.set(param, values[i]);
      out[i] = run(c);
    } catch (const Error& e) {
      RunSummary s;
      s.name = c.name;
      s.outcome = Outcome::diverged;
      s.first_error = e.what();
      out[i] = s;
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(values.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < values.size(); ++i) one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < values.size(); i = next++) one(i);
    });
  for (auto& t : pool) t.join();
  return out;
}

void write_summary(std::ostream& os, const RunSummary& s) {
  os << "name " << s.name << "\n"
     << "outcome " << to_string(s.outcome) << "\n"
     << "max_com_error " << fmt(s.max_com_error) << "\n"
     << "rms_force_error " << fmt(s.rms_force_error) << "\n"
     << "max_base_tilt " << fmt(s.max_base_tilt) << "\n"
     << "mean_solve_time_us " << fmt(s.mean_solve_time_us) << "\n"
     << "ticks " << s.ticks << "\n"
     << "end_time " << fmt(s.end_time) << "\n"
     << "controller_errors " << s.controller_errors << "\n"
     << "qp_errors " << s.qp_errors << "\n"
     << "max_kkt_residual " << fmt(s.max_kkt_residual) << "\n"
     << "max_equality_residual " << fmt(s.max_equality_residual) << "\n";
  if (s.force_settle_time >= 0.0) os << "force_settle_time " << fmt(s.force_settle_time) << "\n";
  if (s.event_recovery_time >= 0.0) os << "event_recovery_time " << fmt(s.event_recovery_time) << "\n";
  os << "final_force_error " << fmt(s.final_force_error) << "\n";
  if (!s.first_error.empty()) os << "first_error " << s.first_error << "\n";
}

std::string summary_csv_header() {
  return "name,outcome,max_com_error,rms_force_error,max_base_tilt,mean_solve_time_us,ticks,end_time,controller_errors,"
         "qp_errors,force_settle_time,event_recovery_time,final_force_error";
}

std::string summary_csv_row(const RunSummary& s) {
  std::string r = s.name + "," + to_string(s.outcome);
  for (double v : {s.max_com_error, s.rms_force_error, s.max_base_tilt, s.mean_solve_time_us}) r += "," + fmt(v);
  r += "," + std::to_string(s.ticks) + "," + fmt(s.end_time) + "," + std::to_string(s.controller_errors) + "," + std::to_string(s.qp_errors);
  for (double v : {s.force_settle_time, s.event_recovery_time, s.final_force_error}) r += "," + fmt(v);
  return r;
}

std::string validate_csv(const std::string& textin) {
  std::istringstream in(textin);
  std::string line;
  if (!std::getline(in, line) || line.empty()) return "missing header";
  const std::size_t ncol = std::count(line.begin(), line.end(), ',') + 1;
  if (line.rfind("t,", 0) != 0) return "first column must be t";
  double last_t = -std::numeric_limits<double>::infinity();
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    std::istringstream cells(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(cells, cell, ',')) {
      double v = 0.0;
      try {
        v = text::parse_double(cell, row);
      } catch (const ParseError&) {
        return "row " + std::to_string(row) + ": non-finite or malformed value '" + cell + "'";
      }
      if (n == 0) {
        if (!(v > last_t)) return "row " + std::to_string(row) + ": time is not increasing";
        last_t = v;
      }
      ++n;
    }
    if (n != ncol) return "row " + std::to_string(row) + ": expected " + std::to_string(ncol) + " columns";
  }
  return {};
}

}  // namespace wbstab::runner
