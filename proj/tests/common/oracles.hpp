#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <vector>

#include "test_util.hpp"
#include "wbstab/qp.hpp"
#include "wbstab/rbd.hpp"

namespace wbstab::test {

// Exhaustive active-set enumeration: the optimum of a strictly convex QP is the
// lowest-objective feasible stationary point over all subsets of inequalities.
inline double enumeration_oracle(const qp::QpProblem& p, VecX* best_x = nullptr) {
  const int n = p.size();
  std::vector<std::pair<VecX, double>> rows;  // w'x <= e
  for (int i = 0; i < p.C.rows(); ++i) rows.push_back({p.C.row(i).transpose(), p.d[i]});
  for (int k = 0; k < n; ++k) {
    if (std::isfinite(p.lower[k])) rows.push_back({-VecX::Unit(n, k), -p.lower[k]});
    if (std::isfinite(p.upper[k])) rows.push_back({VecX::Unit(n, k), p.upper[k]});
  }
  const int m = static_cast<int>(rows.size());
  const int me = static_cast<int>(p.b.size());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int j = 0; j < m; ++j)
      if (mask & (1u << j)) act.push_back(j);
    const int q = static_cast<int>(act.size());
    if (me + q > n) continue;
    const int k = n + me + q;
    MatX K = MatX::Zero(k, k);
    VecX rhs = VecX::Zero(k);
    K.topLeftCorner(n, n) = p.P;
    rhs.head(n) = -p.g;
    if (me) {
      K.block(n, 0, me, n) = p.A;
      K.block(0, n, n, me) = p.A.transpose();
      rhs.segment(n, me) = p.b;
    }
    for (int j = 0; j < q; ++j) {
      K.block(n + me + j, 0, 1, n) = rows[act[j]].first.transpose();
      K.block(0, n + me + j, n, 1) = rows[act[j]].first;
      rhs[n + me + j] = rows[act[j]].second;
    }
    const Eigen::FullPivLU<MatX> lu(K);
    if (!lu.isInvertible()) continue;
    const VecX sol = lu.solve(rhs);
    const VecX x = sol.head(n);
    bool feasible = true;
    for (const auto& [w, ub] : rows) feasible = feasible && w.dot(x) <= ub + 1e-9 * (1.0 + std::abs(ub));
    if (!feasible) continue;
    const double f = p.objective(x);
    if (f < best) {
      best = f;
      if (best_x) *best_x = x;
    }
  }
  return best;
}

inline qp::QpProblem random_problem(test::Rng& rng, int n) {
  const int me = static_cast<int>(rng.uniform(0.0, 0.999) * (n / 2 + 1));
  const int mi = static_cast<int>(rng.uniform(0.0, 0.999) * 6);
  qp::QpProblem p = qp::QpProblem::zeros(n, me, mi);
  const MatX M = MatX::NullaryExpr(n, n, [&] { return rng.uniform(); });
  p.P = M.transpose() * M + 0.05 * MatX::Identity(n, n);
  p.g = rng.vec(n, 3.0);
  const VecX feas = rng.vec(n);
  for (int i = 0; i < me; ++i) p.A.row(i) = rng.vec(n).transpose();
  p.b = p.A * feas;
  for (int i = 0; i < mi; ++i) p.C.row(i) = rng.vec(n).transpose();
  p.d = p.C * feas + VecX::NullaryExpr(mi, [&] { return rng.uniform(0.0, 0.5); });
  for (int k = 0; k < n; ++k) {
    const double r = rng.uniform(0.0, 1.0);
    if (r < 0.3) p.lower[k] = feas[k] - rng.uniform(0.0, 0.5);
    if (r > 0.6) p.upper[k] = feas[k] + rng.uniform(0.0, 0.5);
  }
  return p;
}

// Finite-difference world-aligned velocity of a frame along the motion q(t)
// with generalized velocity held fixed.
inline Vec6 fd_frame_velocity(const model::RobotModel& m, const model::Configuration& q, const model::FrameRef& f, double h) {
  const VecX v = q.velocity();
  rbd::Evaluator ep(m), em(m);
  ep.update(rbd::integrate(q, v, h));
  em.update(rbd::integrate(q, v, -h));
  const spatial::Transform Xp = ep.frame_pose(f);
  const spatial::Transform Xm = em.frame_pose(f);
  Vec6 out;
  out << spatial::log_so3(Xp.rotation * Xm.rotation.transpose()) / (2.0 * h),
      (Xp.translation - Xm.translation) / (2.0 * h);
  return out;
}

}  // namespace wbstab::test
