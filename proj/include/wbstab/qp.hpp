#pragma once

// Dense convex QP
//
//   minimize  1/2 x'Px + g'x   subject to  Ax = b,  Cx <= d,  lower <= x <= upper
//
// Equalities are eliminated through a nullspace basis; the remaining
// inequality problem is solved with the Goldfarb-Idnani dual active-set
// method. Infinite bounds are ignored.

#include <string>
#include <string_view>
#include <vector>

#include "wbstab/spatial.hpp"

namespace wbstab::qp {

struct QpProblem {
  MatX P;
  VecX g;
  MatX A;
  VecX b;
  MatX C;
  VecX d;
  VecX lower;
  VecX upper;

  /// Unconstrained problem of size n with zero cost.
  static QpProblem zeros(int n, int n_eq = 0, int n_ineq = 0);
  int size() const { return static_cast<int>(g.size()); }
  /// Throws ValidationError on inconsistent dimensions, asymmetric P or lower > upper.
  void check() const;
  double objective(const VecX& x) const { return 0.5 * x.dot(P * x) + g.dot(x); }
};

enum class QpStatus { optimal, infeasible, max_iter };
const char* to_string(QpStatus s);

struct QpSolution {
  VecX x;
  QpStatus status = QpStatus::max_iter;
  double kkt_residual = 0.0;
  int iterations = 0;
  VecX y;        // equality multipliers
  VecX z;        // inequality multipliers, >= 0
  VecX z_lower;  // bound multipliers, >= 0
  VecX z_upper;
  /// Constraint indices active at the solution: inequalities first (0..m_i-1),
  /// then lower bounds (m_i + k), then upper bounds (m_i + n + k).
  std::vector<int> active_set;
  /// For infeasible problems, the violation left in the blocking constraint.
  double certificate = 0.0;
  double objective = 0.0;
};

struct QpOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

/// Scaled KKT residual of a candidate primal-dual pair: the largest of
/// stationarity, primal feasibility and complementarity, each divided by the
/// magnitude of the terms that produce it.
double kkt_residual(const QpProblem& p, const QpSolution& s);

/// Reusable solver; remembers the last active set for warm starts.
class Solver {
 public:
  explicit Solver(QpOptions options = {}) : options_(options) {}

  QpSolution solve(const QpProblem& p);
  /// Tries the given active set first and falls back to a cold start when it
  /// does not verify.
  QpSolution solve(const QpProblem& p, const std::vector<int>& warm_active_set);
  QpSolution solve_warm(const QpProblem& p) { return solve(p, last_active_); }

  const QpOptions& options() const { return options_; }
  void reset() { last_active_.clear(); }

 private:
  QpSolution run(const QpProblem& p, const std::vector<int>* warm);

  QpOptions options_;
  std::vector<int> last_active_;
};

QpSolution solve(const QpProblem& p, double tol = 1e-8, int max_iter = 200);

struct LsqTask {
  MatX J;
  VecX r;
  MatX Q;
};

constexpr double kRegularization = 1e-8;

/// P = sum J'QJ + eps I, g = -sum J'Qr. Throws ValidationError on size
/// mismatch or a non-symmetric weight.
QpProblem weighted_lsq_to_qp(const std::vector<LsqTask>& tasks, int n = -1);

std::string dump(const QpProblem& p);
QpProblem load(std::string_view text);

}  // namespace wbstab::qp
