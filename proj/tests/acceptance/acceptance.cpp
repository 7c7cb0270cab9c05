// Acceptance run: one PASS/FAIL line per criterion, details after the verdict.
// Exit status is nonzero when any criterion fails.

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "wbstab/rbd.hpp"
#include "wbstab/runner.hpp"
#include "wbstab/simworld.hpp"
#include "wbstab/stabilizer.hpp"

using namespace wbstab;
using runner::Outcome;
using runner::ScenarioConfig;
using runner::ScenarioKind;
using runner::StabilizerKind;

namespace {

// failure boundary of the proposed stabilizer on the coupled platform, deg/s:
// the lowest swept rate at which it fell, measured once and pinned
constexpr double kPinnedBoundary = 40.0;

struct Verdict {
  bool pass = true;
  std::string detail;
  double seconds = 0.0;
};

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

std::string brief(const runner::RunSummary& s) {
  std::ostringstream os;
  os << runner::to_string(s.outcome) << " t=" << fmt("%.2f", s.end_time) << " com=" << fmt("%.4f", s.max_com_error)
     << " rmsF=" << fmt("%.1f", s.rms_force_error);
  return os.str();
}

// worst QP residuals across all closed-loop runs, for criterion 3
double g_worst_kkt = 0.0;
int g_qp_errors = 0;
int g_runs = 0;

runner::RunSummary run_logged(const ScenarioConfig& c) {
  const runner::RunSummary s = runner::run(c);
  g_worst_kkt = std::max(g_worst_kkt, s.max_kkt_residual);
  // QP failures after a fall are expected
  if (s.outcome == Outcome::balanced) g_qp_errors += s.qp_errors;
  ++g_runs;
  return s;
}

ScenarioConfig scenario(StabilizerKind k, ScenarioKind s, double duration) {
  ScenarioConfig c;
  c.stabilizer = k;
  c.scenario = s;
  c.duration = duration;
  return c;
}

Verdict dynamics_oracles() {
  Clock clock;
  const model::RobotModel m = model::builtin_biped();
  test::Rng rng(101);
  double sym = 0.0, min_eig = 1e300, jac = 0.0, jdot = 0.0, fd_res = 0.0;
  rbd::Evaluator ev(m);
  for (int i = 0; i < 1000; ++i) {
    ev.update(rng.configuration(m));
    const MatX H = ev.mass_matrix();
    sym = std::max(sym, (H - H.transpose()).norm() / H.norm());
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<MatX>(H).eigenvalues()(0));
  }
  for (int i = 0; i < 100; ++i) {
    const model::Configuration q = rng.configuration(m);
    const VecX v = q.velocity();
    rbd::Evaluator e0(m), ep(m), em(m);
    e0.update(q);
    const double h = 1e-5;
    ep.update(rbd::integrate(q, v, h));
    em.update(rbd::integrate(q, v, -h));
    for (const char* name : {"l_sole", "r_sole", "head", "torso"}) {
      const model::FrameRef f = m.frame(name);
      const Vec6 Jv = e0.jacobian(f) * v;
      jac = std::max(jac, (Jv - test::fd_frame_velocity(m, q, f, 1e-6)).norm() / std::max(1.0, Jv.norm()));
      const Vec6 a = e0.jacobian_dot_qdot(f);
      const Vec6 fd = (ep.jacobian(f) * v - em.jacobian(f) * v) / (2.0 * h);
      jdot = std::max(jdot, (a - fd).norm() / std::max(1.0, a.norm()));
    }
    const VecX tau = rng.vec(12, 50.0);
    const spatial::SpatialForce wl{rng.vec3(20.0), rng.vec3(300.0)};
    const spatial::SpatialForce wr{rng.vec3(20.0), rng.vec3(300.0)};
    const VecX qdd = rbd::forward_dynamics(m, q, tau, {{"l_sole", wl}, {"r_sole", wr}});
    VecX rhs = VecX::Zero(18);
    rhs.tail(12) = tau;
    rhs += e0.jacobian(m.frame("l_sole")).transpose() * wl.vector();
    rhs += e0.jacobian(m.frame("r_sole")).transpose() * wr.vector();
    fd_res = std::max(fd_res, (e0.mass_matrix() * qdd + e0.bias_forces() - rhs).norm() / std::max(1.0, rhs.norm()));
  }
  // free plant, 1 s at 0.1 ms, drift relative to the largest kinetic energy
  model::Configuration q = rng.configuration(m, 0.5);
  ev.update(q);
  const double e_start = ev.kinetic_energy() + ev.potential_energy();
  double ke_max = ev.kinetic_energy(), drift = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const VecX qdd = rbd::forward_dynamics(m, q, VecX::Zero(12), {});
    q = rbd::integrate(q, q.velocity() + 1e-4 * qdd, 1e-4);
    ev.update(q);
    ke_max = std::max(ke_max, ev.kinetic_energy());
    drift = std::max(drift, std::abs(ev.kinetic_energy() + ev.potential_energy() - e_start));
  }
  Verdict v;
  v.seconds = clock.seconds();
  v.pass = sym <= 1e-12 && min_eig > 0.0 && jac <= 1e-5 && jdot <= 1e-4 && fd_res <= 1e-9 && drift / ke_max <= 1e-3 &&
           v.seconds < 30.0;
  v.detail = "H asym " + fmt("%.1e", sym) + ", min eig " + fmt("%.2e", min_eig) + ", J " + fmt("%.1e", jac) +
             ", Jdot qdot " + fmt("%.1e", jdot) + ", FD residual " + fmt("%.1e", fd_res) + ", energy drift " +
             fmt("%.1e", drift / ke_max);
  return v;
}

Verdict contact_force_model() {
  Clock clock;
  const model::RobotModel m = model::builtin_biped();
  test::Rng rng(102);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const model::Configuration q = rng.configuration(m);
    const VecX phi = rng.vec(12, 80.0);  // servo torque, eta = 0
    const auto [qdd, F] = sim::constrained_forward_dynamics(m, q, phi, {"l_sole", "r_sole"});
    const rbd::ContactQuantities cq = rbd::contact_quantities(m, q, {"l_sole", "r_sole"});
    worst = std::max(worst, (cq.gamma_c * phi + cq.h_c - F).norm() / F.norm());
  }
  Verdict v;
  v.seconds = clock.seconds();
  v.pass = worst <= 1e-6 && v.seconds < 10.0;
  v.detail = "worst relative error " + fmt("%.1e", worst) + " over 100 states";
  return v;
}

Verdict qp_oracle() {
  test::Rng rng(103);
  double worst = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const qp::QpProblem p = test::random_problem(rng, 1 + trial % 8);
    const qp::QpSolution s = qp::solve(p);
    if (s.status != qp::QpStatus::optimal) return {false, "random problem " + std::to_string(trial) + " not solved"};
    const double f = test::enumeration_oracle(p);
    worst = std::max(worst, std::abs(s.objective - f) / std::max(1.0, std::abs(f)));
    worst_kkt = std::max(worst_kkt, s.kkt_residual);
  }
  Verdict v;
  v.pass = worst <= 1e-6 && worst_kkt <= 1e-8 && g_worst_kkt <= 1e-8 && g_qp_errors == 0;
  v.detail = "oracle gap " + fmt("%.1e", worst) + ", random KKT " + fmt("%.1e", worst_kkt) + ", in-loop KKT " +
             fmt("%.1e", g_worst_kkt) + " over " + std::to_string(g_runs) + " runs, " +
             std::to_string(g_qp_errors) + " QP failures in balanced runs";
  return v;
}

Verdict static_equilibrium() {
  Clock clock;
  const model::RobotModel m = model::builtin_biped();
  const model::Configuration q = model::biped_default_stance(m);
  const stab::StabilizerConfig cfg = stab::StabilizerConfig::defaults(m);
  const stab::References refs = stab::hold_references(m, q, {"l_sole", "r_sole"});
  const stab::ReferenceForce rf = stab::reference_force(m, q, refs, cfg);
  const stab::TickQuantities tq = stab::tick_quantities(m, q, refs, cfg);
  double cone = 0.0;
  for (int i = 0; i < 2; ++i) {
    MatX C;
    VecX d;
    stab::contact_wrench_rows(tq.contact_pose[i].rotation, cfg.foot_half_extents[i], cfg.friction_mu,
                              cfg.min_normal_force, C, d);
    cone = std::max(cone, (C * rf.F.segment<6>(6 * i) - d).maxCoeff());
  }
  const double total = rf.F[5] + rf.F[11], split = std::abs(rf.F[5] - rf.F[11]);
  Verdict v;
  v.seconds = clock.seconds();
  v.pass = std::abs(total - 686.7) <= 2.0 && split <= 1.0 && cone <= 1e-8 && v.seconds < 1.0;
  v.detail = "total " + fmt("%.3f", total) + " N, split " + fmt("%.3f", split) + " N, worst row " + fmt("%.1e", cone);
  return v;
}

Verdict force_tracking() {
  Clock clock;
  Verdict v;
  double last = 1e300;
  for (double k : {-10.0, -20.0, -40.0}) {
    ScenarioConfig c = scenario(StabilizerKind::proposed, ScenarioKind::flat, 3.0);
    c.force_gain = k;
    c.force_step = 50.0;
    const runner::RunSummary s = run_logged(c);
    const double bound = 5.0 / std::abs(k);
    const bool settled = s.outcome == Outcome::balanced && s.force_settle_time >= 0.0 && s.force_settle_time <= bound;
    v.pass = v.pass && settled && s.force_settle_time < last;
    last = s.outcome == Outcome::balanced ? s.force_settle_time : 1e300;
    v.detail += "k=" + fmt("%g", k) + ": " + runner::to_string(s.outcome) + " settle " +
                fmt("%.3f", s.force_settle_time) + " s (bound " + fmt("%.3f", bound) + "); ";
  }
  // the shipped gain, for reference
  ScenarioConfig c = scenario(StabilizerKind::proposed, ScenarioKind::flat, 3.0);
  c.force_step = 50.0;
  const runner::RunSummary s = run_logged(c);
  v.detail += "default k=" + fmt("%g", c.force_gain) + ": " + runner::to_string(s.outcome) + " settle " +
              fmt("%.3f", s.force_settle_time) + " s";
  v.seconds = clock.seconds();
  v.pass = v.pass && v.seconds < 60.0;
  return v;
}

Verdict slow_platforms() {
  Clock clock;
  Verdict v;
  for (ScenarioKind sk : {ScenarioKind::coupled, ScenarioKind::independent}) {
    const runner::RunSummary p = run_logged(scenario(StabilizerKind::proposed, sk, 20.0));
    const runner::RunSummary z = run_logged(scenario(StabilizerKind::zmp, sk, 20.0));
    v.pass = v.pass && p.outcome == Outcome::balanced && z.outcome == Outcome::balanced &&
             p.max_com_error < z.max_com_error && p.rms_force_error < z.rms_force_error;
    v.detail += std::string(runner::to_string(sk)) + ": proposed " + brief(p) + " | zmp " + brief(z) + "; ";
  }
  v.seconds = clock.seconds();
  v.pass = v.pass && v.seconds < 300.0;
  return v;
}

// lowest swept rate with outcome != balanced, or 0 when none; also checks
// that every higher rate fails too
double boundary(StabilizerKind k, const std::vector<double>& rates, bool& monotone, std::string& trace) {
  double first = 0.0;
  monotone = true;
  trace += std::string(runner::to_string(k)) + " [";
  for (double r : rates) {
    ScenarioConfig c = scenario(k, ScenarioKind::coupled, 20.0);
    c.attitude_rate_deg = r;
    const runner::RunSummary s = run_logged(c);
    const bool ok = s.outcome == Outcome::balanced;
    trace += ok ? "B" : "F";
    if (!ok && first == 0.0) first = r;
    if (ok && first != 0.0) monotone = false;
  }
  trace += "] ";
  return first;
}

Verdict fast_platform() {
  Clock clock;
  Verdict v;
  ScenarioConfig fast = scenario(StabilizerKind::proposed, ScenarioKind::coupled, 20.0);
  fast.attitude_rate_deg = 50.0;
  const runner::RunSummary p = run_logged(fast);
  fast.stabilizer = StabilizerKind::zmp;
  const runner::RunSummary z = run_logged(fast);
  const bool part1 = p.outcome == Outcome::balanced && z.outcome != Outcome::balanced;
  v.detail = "50 deg/s: proposed " + brief(p) + " | zmp " + brief(z) + "; sweep 10..90: ";

  const std::vector<double> rates{10, 20, 30, 40, 50, 60, 70, 80, 90};
  bool mono_p = false, mono_z = false;
  const double bp = boundary(StabilizerKind::proposed, rates, mono_p, v.detail);
  const double bz = boundary(StabilizerKind::zmp, rates, mono_z, v.detail);
  const bool part2 = bp == kPinnedBoundary && bp > bz && bz > 0.0 && bp >= 30.0 && bp <= 90.0 && mono_p && mono_z;
  v.detail += "boundary proposed " + fmt("%g", bp) + " (pinned " + fmt("%g", kPinnedBoundary) + "), zmp " +
              fmt("%g", bz) + " deg/s; fast run " + (part1 ? "ok" : "not met") + ", boundary " +
              (part2 ? "ok" : "not met");
  v.pass = part1 && part2;
  v.seconds = clock.seconds();
  return v;
}

Verdict drop() {
  Clock clock;
  const runner::RunSummary p = run_logged(scenario(StabilizerKind::proposed, ScenarioKind::drop, 10.0));
  const runner::RunSummary z = run_logged(scenario(StabilizerKind::zmp, ScenarioKind::drop, 10.0));
  Verdict v;
  const bool proposed_ok = p.outcome == Outcome::balanced && p.event_recovery_time >= 0.0 && p.event_recovery_time <= 1.5;
  const bool baseline_ok = z.outcome != Outcome::balanced || z.final_force_error > 50.0;
  v.seconds = clock.seconds();
  v.pass = proposed_ok && baseline_ok && v.seconds < 120.0;
  v.detail = "proposed " + brief(p) + " recovery " + fmt("%.3f", p.event_recovery_time) + " s | zmp " + brief(z) +
             " steady |e_F| " + fmt("%.1f", z.final_force_error) + " N";
  return v;
}

Verdict determinism() {
  Verdict v;
  for (StabilizerKind k : {StabilizerKind::proposed, StabilizerKind::zmp}) {
    ScenarioConfig c = scenario(k, ScenarioKind::independent, 2.0);
    c.perturbation = 0.01;
    c.seed = 1234;
    std::ostringstream a, b;
    runner::run(c, {&a, ""});
    runner::run(c, {&b, ""});
    const bool same = a.str() == b.str() && !a.str().empty();
    v.pass = v.pass && same;
    v.detail += std::string(runner::to_string(k)) + (same ? " identical " : " differs ") +
                std::to_string(a.str().size()) + " bytes; ";
  }
  return v;
}

Verdict performance() {
  ScenarioConfig c = scenario(StabilizerKind::proposed, ScenarioKind::coupled, 3.0);
  c.measure_time = true;
  const runner::RunSummary s = run_logged(c);
  Verdict v;
  v.pass = s.outcome == Outcome::balanced && s.mean_solve_time_us < 1000.0;
  v.detail = "mean tick " + fmt("%.1f", s.mean_solve_time_us) + " us over " + std::to_string(s.ticks) + " ticks";
  return v;
}

}  // namespace

int main() {
  std::map<int, Verdict> results;
  std::map<int, std::function<Verdict()>> criteria = {
      {1, dynamics_oracles}, {2, contact_force_model}, {4, static_equilibrium}, {5, force_tracking},
      {6, slow_platforms},   {7, fast_platform},       {8, drop},               {9, determinism},
      {10, performance},
  };
  // closed-loop runs first, criterion 3 reads their QP residuals
  for (auto& [n, f] : criteria) {
    try {
      results[n] = f();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("exception: ") + e.what()};
    }
  }
  try {
    results[3] = qp_oracle();
  } catch (const std::exception& e) {
    results[3] = {false, std::string("exception: ") + e.what()};
  }
  int failed = 0;
  for (const auto& [n, v] : results) {
    std::printf("criterion %d: %s  %s", n, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    if (v.seconds > 0.0) std::printf(" [%.1f s]", v.seconds);
    std::printf("\n");
    failed += !v.pass;
  }
  std::fflush(stdout);
  return failed ? 1 : 0;
}
