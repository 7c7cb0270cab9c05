#include "wbstab/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "wbstab/errors.hpp"
#include "wbstab/text.hpp"

namespace wbstab::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const VecX& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

VecX bound_or(const VecX& v, int n, double fill) { return v.size() ? v : VecX::Constant(n, fill); }

// Inequality s(z) = n'z - e >= 0 in the reduced coordinates.
struct Row {
  VecX n;
  double e = 0.0;
  int original = 0;  // unified index
  double norm = 1.0;
};

// Equality elimination x = x0 + Z z.
struct Reduction {
  Eigen::ColPivHouseholderQR<MatX> qr;
  int rank = 0;
  VecX x0;
  MatX Z;
};

Reduction reduce(const QpProblem& p, double tol) {
  const int n = p.size();
  Reduction r;
  const int me = static_cast<int>(p.b.size());
  if (me == 0) {
    r.x0 = VecX::Zero(n);
    r.Z = MatX::Identity(n, n);
    return r;
  }
  r.qr.compute(p.A.transpose());
  r.qr.setThreshold(1e-12);
  r.rank = static_cast<int>(r.qr.rank());
  const MatX Q = r.qr.householderQ();
  const VecX pb = r.qr.colsPermutation().transpose() * p.b;
  const auto R1 = r.qr.matrixQR().topLeftCorner(r.rank, r.rank).triangularView<Eigen::Upper>();
  const VecX w = R1.transpose().solve(pb.head(r.rank));
  r.x0 = Q.leftCols(r.rank) * w;
  r.Z = Q.rightCols(n - r.rank);
  const double resid = inf_norm(p.A * r.x0 - p.b);
  if (resid > tol * (1.0 + inf_norm(p.b)))
    throw InfeasibleError("equality constraints are inconsistent (residual " + std::to_string(resid) + ")");
  return r;
}

VecX equality_multipliers(const QpProblem& p, const Reduction& r, const VecX& rhs) {
  // A'y = rhs in the least-squares sense
  const int me = static_cast<int>(p.b.size());
  VecX y = VecX::Zero(me);
  if (me == 0 || r.rank == 0) return y;
  const MatX Q = r.qr.householderQ();
  const VecX qt = Q.leftCols(r.rank).transpose() * rhs;
  const auto R = r.qr.matrixQR().topLeftCorner(r.rank, r.rank).triangularView<Eigen::Upper>();
  VecX yp = VecX::Zero(me);
  yp.head(r.rank) = R.solve(qt);
  return r.qr.colsPermutation() * yp;
}

class DualActiveSet {
 public:
  DualActiveSet(const MatX& G, const VecX& a, std::vector<Row> rows, const QpOptions& opt)
      : llt_(G), a_(a), rows_(std::move(rows)), opt_(opt) {
    if (llt_.info() != Eigen::Success) throw Error("QP Hessian is not positive definite on the equality nullspace");
    nz_ = static_cast<int>(a.size());
  }

  double slack(int j, const VecX& z) const { return rows_[j].n.dot(z) - rows_[j].e; }

  // A constraint counts as violated when its slack, normalized by the row, is below this.
  double violation(int j, const VecX& z) const { return -slack(j, z) / std::max(1.0, rows_[j].norm); }

  bool try_warm(const std::vector<int>& active_rows, VecX& z, VecX& u) const {
    const int q = static_cast<int>(active_rows.size());
    if (q > nz_) return false;
    MatX N(nz_, q);
    VecX e(q);
    for (int k = 0; k < q; ++k) {
      N.col(k) = rows_[active_rows[k]].n;
      e[k] = rows_[active_rows[k]].e;
    }
    const MatX B = llt_.matrixL().solve(N);
    const VecX La = llt_.matrixL().solve(a_);
    Eigen::LLT<MatX> bb(B.transpose() * B);
    if (q > 0 && bb.info() != Eigen::Success) return false;
    u = q ? VecX(bb.solve(e + B.transpose() * La)) : VecX();
    z = llt_.solve(-a_ + N * u);
    for (int k = 0; k < q; ++k)
      if (u[k] < -opt_.tol * (1.0 + inf_norm(u))) return false;
    for (std::size_t j = 0; j < rows_.size(); ++j)
      if (violation(static_cast<int>(j), z) > violation_tol()) return false;
    u = u.cwiseMax(0.0);
    return true;
  }

  struct Result {
    VecX z;
    std::vector<int> active;  // row indices
    VecX u;
    QpStatus status = QpStatus::optimal;
    int iterations = 0;
    double certificate = 0.0;
  };

  Result run() const {
    Result res;
    res.z = llt_.solve(-a_);
    std::vector<double> u;
    for (;;) {
      int p = -1;
      double worst = violation_tol();
      for (std::size_t j = 0; j < rows_.size(); ++j) {
        if (std::find(res.active.begin(), res.active.end(), static_cast<int>(j)) != res.active.end()) continue;
        const double v = violation(static_cast<int>(j), res.z);
        if (v > worst) {
          worst = v;
          p = static_cast<int>(j);
        }
      }
      if (p < 0) break;

      double up = 0.0;
      for (;;) {
        if (++res.iterations > opt_.max_iter) {
          res.status = QpStatus::max_iter;
          res.u = VecX::Map(u.data(), static_cast<Eigen::Index>(u.size()));
          return res;
        }
        VecX step, r;
        const bool has_step = direction(res.active, rows_[p].n, step, r);

        double t1 = kInf;
        int k = -1;
        for (int j = 0; j < static_cast<int>(res.active.size()); ++j) {
          if (r[j] > 0.0 && u[j] / r[j] < t1) {
            t1 = u[j] / r[j];
            k = j;
          }
        }
        double t2 = kInf;
        if (has_step) t2 = -slack(p, res.z) / rows_[p].n.dot(step);

        if (!std::isfinite(t1) && !std::isfinite(t2)) {
          res.status = QpStatus::infeasible;
          res.certificate = -slack(p, res.z);
          res.u = VecX::Map(u.data(), static_cast<Eigen::Index>(u.size()));
          return res;
        }
        const double t = std::min(t1, t2);
        if (has_step) res.z += t * step;
        for (int j = 0; j < static_cast<int>(u.size()); ++j) u[j] -= t * r[j];
        up += t;
        if (t2 <= t1) {
          res.active.push_back(p);
          u.push_back(up);
          break;
        }
        res.active.erase(res.active.begin() + k);
        u.erase(u.begin() + k);
      }
    }
    res.u = VecX::Map(u.data(), static_cast<Eigen::Index>(u.size()));
    return res;
  }

  int size() const { return nz_; }
  const std::vector<Row>& rows() const { return rows_; }

 private:
  double violation_tol() const { return 1e-3 * opt_.tol; }

  // Primal step and dual direction for adding constraint normal np to the active set.
  bool direction(const std::vector<int>& active, const VecX& np, VecX& step, VecX& r) const {
    const int q = static_cast<int>(active.size());
    const VecX d = llt_.matrixL().solve(np);
    if (q == 0) {
      r.resize(0);
      step = llt_.matrixU().solve(d);
      return d.norm() > 0.0;
    }
    MatX N(nz_, q);
    for (int j = 0; j < q; ++j) N.col(j) = rows_[active[j]].n;
    const MatX B = llt_.matrixL().solve(N);
    const Eigen::HouseholderQR<MatX> qr(B);
    const MatX Q = qr.householderQ();
    const VecX qd = Q.transpose() * d;
    const auto R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
    r = R.solve(qd.head(q));
    VecX proj = Q.rightCols(nz_ - q) * qd.tail(nz_ - q);
    const bool has_step = proj.norm() > 1e-12 * d.norm();
    step = has_step ? VecX(llt_.matrixU().solve(proj)) : VecX::Zero(nz_);
    return has_step;
  }

  Eigen::LLT<MatX> llt_;
  VecX a_;
  std::vector<Row> rows_;
  QpOptions opt_;
  int nz_ = 0;
};

void normalize(QpProblem& p) {
  const int n = p.size();
  if (p.A.rows() == 0) p.A.resize(0, n);
  if (p.C.rows() == 0) p.C.resize(0, n);
  p.lower = bound_or(p.lower, n, -kInf);
  p.upper = bound_or(p.upper, n, kInf);
}

}  // namespace

QpProblem QpProblem::zeros(int n, int n_eq, int n_ineq) {
  QpProblem p;
  p.P = MatX::Zero(n, n);
  p.g = VecX::Zero(n);
  p.A = MatX::Zero(n_eq, n);
  p.b = VecX::Zero(n_eq);
  p.C = MatX::Zero(n_ineq, n);
  p.d = VecX::Zero(n_ineq);
  p.lower = VecX::Constant(n, -kInf);
  p.upper = VecX::Constant(n, kInf);
  return p;
}

void QpProblem::check() const {
  const int n = size();
  if (P.rows() != n || P.cols() != n) throw ValidationError("QP: P must be n x n");
  if ((P - P.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, P.lpNorm<Eigen::Infinity>()))
    throw ValidationError("QP: P is not symmetric");
  if (A.rows() != b.size() || (A.rows() > 0 && A.cols() != n)) throw ValidationError("QP: A/b dimension mismatch");
  if (C.rows() != d.size() || (C.rows() > 0 && C.cols() != n)) throw ValidationError("QP: C/d dimension mismatch");
  if ((lower.size() && lower.size() != n) || (upper.size() && upper.size() != n))
    throw ValidationError("QP: bound dimension mismatch");
  for (int i = 0; i < n; ++i) {
    const double lo = lower.size() ? lower[i] : -kInf;
    const double hi = upper.size() ? upper[i] : kInf;
    if (std::isnan(lo) || std::isnan(hi) || lo > hi) throw ValidationError("QP: lower > upper");
  }
  if (!P.allFinite() || !g.allFinite() || !A.allFinite() || !b.allFinite() || !C.allFinite() || !d.allFinite())
    throw ValidationError("QP: non-finite data");
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "?";
}

double kkt_residual(const QpProblem& prob, const QpSolution& s) {
  QpProblem p = prob;
  normalize(p);
  const int n = p.size();
  const VecX& x = s.x;
  const VecX y = s.y.size() ? s.y : VecX::Zero(p.b.size());
  const VecX z = s.z.size() ? s.z : VecX::Zero(p.d.size());
  const VecX zl = s.z_lower.size() ? s.z_lower : VecX::Zero(n);
  const VecX zu = s.z_upper.size() ? s.z_upper : VecX::Zero(n);

  const VecX Px = p.P * x;
  const VecX Aty = p.A.transpose() * y;
  const VecX Ctz = p.C.transpose() * z;
  const VecX grad = Px + p.g + Aty + Ctz - zl + zu;
  const double stat_scale =
      1.0 + std::max({inf_norm(Px), inf_norm(p.g), inf_norm(Aty), inf_norm(Ctz), inf_norm(zl), inf_norm(zu)});
  double worst = inf_norm(grad) / stat_scale;

  const VecX Ax = p.A * x;
  worst = std::max(worst, inf_norm(Ax - p.b) / (1.0 + std::max(inf_norm(Ax), inf_norm(p.b))));

  const VecX Cx = p.C * x;
  const double c_scale = 1.0 + std::max(inf_norm(Cx), inf_norm(p.d));
  const double z_scale = 1.0 + std::max({inf_norm(z), inf_norm(zl), inf_norm(zu)});
  for (int i = 0; i < Cx.size(); ++i) {
    const double slack = p.d[i] - Cx[i];
    worst = std::max(worst, std::max(0.0, -slack) / c_scale);
    worst = std::max(worst, std::max(0.0, -z[i]) / z_scale);
    worst = std::max(worst, std::abs(z[i] * slack) / (z_scale * c_scale));
  }
  const double x_scale = 1.0 + inf_norm(x);
  for (int i = 0; i < n; ++i) {
    for (const auto& [bound, mult, sign] : {std::tuple{p.lower[i], zl[i], 1.0}, std::tuple{p.upper[i], zu[i], -1.0}}) {
      worst = std::max(worst, std::max(0.0, -mult) / z_scale);
      if (!std::isfinite(bound)) {
        worst = std::max(worst, std::abs(mult) / z_scale);
        continue;
      }
      const double scale = x_scale + std::abs(bound);
      const double slack = sign * (x[i] - bound);
      worst = std::max(worst, std::max(0.0, -slack) / scale);
      worst = std::max(worst, std::abs(mult * slack) / (z_scale * scale));
    }
  }
  return worst;
}

QpSolution Solver::solve(const QpProblem& p) { return run(p, nullptr); }

QpSolution Solver::solve(const QpProblem& p, const std::vector<int>& warm_active_set) {
  return run(p, &warm_active_set);
}

QpSolution Solver::run(const QpProblem& input, const std::vector<int>* warm) {
  input.check();
  QpProblem p = input;
  normalize(p);
  const int n = p.size();
  const int mi = static_cast<int>(p.d.size());

  QpSolution sol;
  Reduction red;
  try {
    red = reduce(p, options_.tol);
  } catch (const InfeasibleError&) {
    sol.x = VecX::Zero(n);
    sol.status = QpStatus::infeasible;
    sol.certificate = inf_norm(p.b);
    return sol;
  }
  const MatX& Z = red.Z;
  const MatX G = Z.transpose() * p.P * Z;
  const VecX a = Z.transpose() * (p.P * red.x0 + p.g);

  std::vector<Row> rows;
  std::vector<int> row_of(mi + 2 * n, -1);
  auto add = [&](VecX nrm, double e, int original) {
    row_of[original] = static_cast<int>(rows.size());
    const double norm = nrm.norm();
    rows.push_back({std::move(nrm), e, original, norm});
  };
  if (mi > 0) {
    const MatX CZ = p.C * Z;
    const VecX Cx0 = p.C * red.x0;
    for (int i = 0; i < mi; ++i) add(-CZ.row(i).transpose(), Cx0[i] - p.d[i], i);
  }
  for (int k = 0; k < n; ++k)
    if (std::isfinite(p.lower[k])) add(Z.row(k).transpose(), p.lower[k] - red.x0[k], mi + k);
  for (int k = 0; k < n; ++k)
    if (std::isfinite(p.upper[k])) add(-Z.row(k).transpose(), red.x0[k] - p.upper[k], mi + n + k);

  DualActiveSet das(G, a, std::move(rows), options_);
  DualActiveSet::Result res;
  bool warmed = false;
  if (warm && !warm->empty()) {
    std::vector<int> act;
    for (int o : *warm)
      if (o >= 0 && o < static_cast<int>(row_of.size()) && row_of[o] >= 0) act.push_back(row_of[o]);
    std::sort(act.begin(), act.end());
    act.erase(std::unique(act.begin(), act.end()), act.end());
    VecX z, u;
    if (das.try_warm(act, z, u)) {
      res.z = z;
      res.u = u;
      res.active = act;
      res.status = QpStatus::optimal;
      warmed = true;
    }
  }
  if (!warmed) res = das.run();

  sol.status = res.status;
  sol.iterations = res.iterations;
  sol.certificate = res.certificate;
  sol.x = red.x0 + Z * res.z;
  sol.z = VecX::Zero(mi);
  sol.z_lower = VecX::Zero(n);
  sol.z_upper = VecX::Zero(n);
  for (std::size_t j = 0; j < res.active.size(); ++j) {
    const int o = das.rows()[res.active[j]].original;
    sol.active_set.push_back(o);
    const double u = j < static_cast<std::size_t>(res.u.size()) ? res.u[j] : 0.0;
    if (o < mi) sol.z[o] = u;
    else if (o < mi + n) sol.z_lower[o - mi] = u;
    else sol.z_upper[o - mi - n] = u;
  }
  std::sort(sol.active_set.begin(), sol.active_set.end());
  const VecX rhs = -(p.P * sol.x + p.g + p.C.transpose() * sol.z - sol.z_lower + sol.z_upper);
  sol.y = equality_multipliers(p, red, rhs);
  sol.objective = p.objective(sol.x);
  sol.kkt_residual = kkt_residual(p, sol);
  if (sol.status == QpStatus::optimal) last_active_ = sol.active_set;
  return sol;
}

QpSolution solve(const QpProblem& p, double tol, int max_iter) {
  Solver s({tol, max_iter});
  return s.solve(p);
}

QpProblem weighted_lsq_to_qp(const std::vector<LsqTask>& tasks, int n) {
  if (n < 0) {
    if (tasks.empty()) throw ValidationError("weighted_lsq_to_qp: no tasks and no size");
    n = static_cast<int>(tasks.front().J.cols());
  }
  QpProblem p = QpProblem::zeros(n);
  for (const LsqTask& t : tasks) {
    if (t.J.cols() != n || t.J.rows() != t.r.size() || t.Q.rows() != t.J.rows() || t.Q.cols() != t.J.rows())
      throw ValidationError("weighted_lsq_to_qp: task dimension mismatch");
    if ((t.Q - t.Q.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 * std::max(1.0, t.Q.lpNorm<Eigen::Infinity>()))
      throw ValidationError("weighted_lsq_to_qp: weight is not symmetric");
    const MatX QJ = t.Q * t.J;
    p.P.noalias() += t.J.transpose() * QJ;
    p.g.noalias() -= QJ.transpose() * t.r;
  }
  p.P = 0.5 * (p.P + p.P.transpose()).eval();
  p.P.diagonal().array() += kRegularization;
  return p;
}

std::string dump(const QpProblem& prob) {
  QpProblem p = prob;
  normalize(p);
  std::ostringstream out;
  const int n = p.size();
  out << "qp n=" << n << " eq=" << p.b.size() << " ineq=" << p.d.size() << "\n";
  for (int i = 0; i < n; ++i) out << "P " << i << " row=" << text::format_vector(p.P.row(i).transpose()) << "\n";
  out << "g values=" << text::format_vector(p.g) << "\n";
  for (int i = 0; i < p.b.size(); ++i)
    out << "A " << i << " row=" << text::format_vector(p.A.row(i).transpose()) << " b=" << text::format_double(p.b[i])
        << "\n";
  for (int i = 0; i < p.d.size(); ++i)
    out << "C " << i << " row=" << text::format_vector(p.C.row(i).transpose()) << " d=" << text::format_double(p.d[i])
        << "\n";
  out << "lower values=" << text::format_vector(p.lower) << "\n";
  out << "upper values=" << text::format_vector(p.upper) << "\n";
  return out.str();
}

QpProblem load(std::string_view source) {
  const auto lines = text::tokenize(source);
  if (lines.empty() || lines[0].words.empty() || lines[0].words[0] != "qp")
    throw ParseError(lines.empty() ? 1 : lines[0].number, "expected 'qp n=<n> eq=<m> ineq=<m>'");
  const auto size_of = [&](const char* key) {
    const double v = lines[0].number_of(key);
    if (v < 0 || v != std::floor(v)) throw ParseError(lines[0].number, std::string("bad ") + key);
    return static_cast<int>(v);
  };
  const int n = size_of("n");
  QpProblem p = QpProblem::zeros(n, size_of("eq"), size_of("ineq"));
  const auto row_index = [](const text::Line& l, long limit) {
    if (l.words.size() != 2) throw ParseError(l.number, "expected a row index");
    const double v = text::parse_double(l.words[1], l.number);
    if (v < 0 || v >= limit || v != std::floor(v)) throw ParseError(l.number, "row index out of range");
    return static_cast<int>(v);
  };
  const auto vec = [n](const text::Line& l, const char* key, bool allow_infinite = false) {
    const auto v = text::parse_list(l.get(key), l.number, allow_infinite);
    if (v.size() != static_cast<std::size_t>(n)) throw ParseError(l.number, std::string("'") + key + "' has wrong length");
    return VecX(Eigen::Map<const VecX>(v.data(), n));
  };
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const text::Line& l = lines[k];
    if (l.words.empty()) throw ParseError(l.number, "expected a keyword");
    const std::string& kw = l.words[0];
    if (kw == "P") {
      p.P.row(row_index(l, n)) = vec(l, "row").transpose();
    } else if (kw == "g") {
      p.g = vec(l, "values");
    } else if (kw == "A") {
      const int i = row_index(l, p.A.rows());
      p.A.row(i) = vec(l, "row").transpose();
      p.b[i] = l.number_of("b");
    } else if (kw == "C") {
      const int i = row_index(l, p.C.rows());
      p.C.row(i) = vec(l, "row").transpose();
      p.d[i] = l.number_of("d");
    } else if (kw == "lower") {
      p.lower = vec(l, "values", true);
    } else if (kw == "upper") {
      p.upper = vec(l, "values", true);
    } else {
      throw ParseError(l.number, "unknown keyword '" + kw + "'");
    }
  }
  p.check();
  return p;
}

}  // namespace wbstab::qp
