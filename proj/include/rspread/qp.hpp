#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <vector>

#include "rspread/model.hpp"

namespace rspread {

/// Dense convex QP
///   min 1/2 x^T H x + f^T x
///   s.t. Aeq x = beq,  Aineq x >= bineq
/// H must be symmetric positive semidefinite and positive definite on
/// the nullspace of Aeq for a unique minimizer.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd f;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Aineq;
  Eigen::VectorXd bineq;

  int n() const { return static_cast<int>(H.rows()); }
  int num_eq() const { return static_cast<int>(Aeq.rows()); }
  int num_ineq() const { return static_cast<int>(Aineq.rows()); }

  void validate() const {
    if (H.rows() != H.cols() || f.size() != H.rows())
      throw Error("QpProblem: inconsistent cost dimensions");
    if (Aeq.rows() != beq.size() || (Aeq.rows() > 0 && Aeq.cols() != n()))
      throw Error("QpProblem: inconsistent equality dimensions");
    if (Aineq.rows() != bineq.size() ||
        (Aineq.rows() > 0 && Aineq.cols() != n()))
      throw Error("QpProblem: inconsistent inequality dimensions");
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw Error("QpProblem: H not symmetric");
  }

  /// Plain-text dump (row-major, %.17g) for offline debugging.
  void dump(std::ostream& os) const {
    auto emit = [&os](const char* name, const Eigen::MatrixXd& m) {
      os << name << " " << m.rows() << " " << m.cols() << "\n";
      char buf[32];
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
          os << buf << (c + 1 == m.cols() ? "" : " ");
        }
        os << "\n";
      }
    };
    emit("H", H);
    emit("f", f);
    emit("Aeq", Aeq);
    emit("beq", beq);
    emit("Aineq", Aineq);
    emit("bineq", bineq);
  }
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
  std::vector<int> active_set;
  double kkt_residual = 0.0;
  bool regularized = false;
  int iterations = 0;

  double objective(const QpProblem& p) const {
    return 0.5 * x.dot(p.H * x) + p.f.dot(x);
  }
};

/// Primal active-set solver for small dense convex QPs.
///
/// The working set is iterated with KKT subproblem solves; ties in
/// pivoting are broken by lowest constraint index, so the solver is
/// deterministic. Each instance owns its scratch storage: use one
/// instance per thread.
class QpSolver {
 public:
  QpSolution solve(const QpProblem& problem) {
    return solve(problem, std::vector<int>{});
  }

  QpSolution solve(const QpProblem& problem,
                   const std::vector<int>& warm_active) {
    problem.validate();
    const int n = problem.n();
    regularized_ = false;

    // Fast path: the equality-constrained minimizer, optionally with a
    // warm-started working set, is usually already feasible.
    std::vector<int> working = sanitize(warm_active, problem.num_ineq());
    Eigen::VectorXd x;
    if (try_subspace_minimizer(problem, working, x) &&
        max_violation(problem, x) <= kFeasTol) {
      return iterate(problem, x, working);
    }
    working.clear();
    if (try_subspace_minimizer(problem, working, x) &&
        max_violation(problem, x) <= kFeasTol) {
      return iterate(problem, x, working);
    }

    x = phase1(problem);
    return iterate(problem, x, {});
  }

 private:
  static constexpr double kFeasTol = 1e-9;
  static constexpr double kDirTol = 1e-11;
  static constexpr double kMultTol = 1e-10;
  static constexpr double kRegularization = 1e-10;

  bool regularized_ = false;

  static std::vector<int> sanitize(std::vector<int> set, int mi) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    std::erase_if(set, [mi](int i) { return i < 0 || i >= mi; });
    return set;
  }

  static double max_violation(const QpProblem& p, const Eigen::VectorXd& x) {
    double v = 0.0;
    if (p.num_eq() > 0)
      v = (p.Aeq * x - p.beq).cwiseAbs().maxCoeff();
    if (p.num_ineq() > 0)
      v = std::max(v, (p.bineq - p.Aineq * x).maxCoeff());
    return v;
  }

  // Solves the KKT system of min cost s.t. Aeq x = beq and the working
  // set held at equality. Returns false if the system stays singular
  // even after regularizing H.
  bool try_subspace_minimizer(const QpProblem& p,
                              const std::vector<int>& working,
                              Eigen::VectorXd& x) {
    const int n = p.n();
    const int me = p.num_eq();
    const int mw = static_cast<int>(working.size());
    const int dim = n + me + mw;

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs(dim);
    for (int attempt = 0; attempt < 2; ++attempt) {
      kkt.topLeftCorner(n, n) = p.H;
      if (attempt == 1 || regularized_) {
        kkt.topLeftCorner(n, n) += kRegularization *
                                   Eigen::MatrixXd::Identity(n, n);
        regularized_ = true;
      }
      if (me > 0) {
        kkt.block(0, n, n, me) = p.Aeq.transpose();
        kkt.block(n, 0, me, n) = p.Aeq;
      }
      for (int r = 0; r < mw; ++r) {
        kkt.block(0, n + me + r, n, 1) = p.Aineq.row(working[r]).transpose();
        kkt.block(n + me + r, 0, 1, n) = p.Aineq.row(working[r]);
      }
      rhs.head(n) = -p.f;
      if (me > 0) rhs.segment(n, me) = p.beq;
      for (int r = 0; r < mw; ++r) rhs[n + me + r] = p.bineq[working[r]];

      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (lu.isInvertible()) {
        x = lu.solve(rhs).head(n);
        return true;
      }
    }
    return false;
  }

  // Feasibility restoration: minimize elastic slacks on the violated
  // inequalities around the minimum-norm equality solution.
  Eigen::VectorXd phase1(const QpProblem& p) {
    const int n = p.n();
    const int mi = p.num_ineq();

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    if (p.num_eq() > 0) {
      x0 = p.Aeq.completeOrthogonalDecomposition().solve(p.beq);
      if ((p.Aeq * x0 - p.beq).cwiseAbs().maxCoeff() > kFeasTol)
        throw QpInfeasible("qp: equality constraints inconsistent");
    }
    if (mi == 0) return x0;

    QpProblem aux;
    const int na = n + mi;
    aux.H = Eigen::MatrixXd::Identity(na, na);
    aux.H.topLeftCorner(n, n) *= 1e-6;
    aux.f = Eigen::VectorXd::Zero(na);
    aux.f.head(n) = -1e-6 * x0;
    aux.f.tail(mi).setOnes();
    aux.Aeq.resize(p.num_eq(), na);
    if (p.num_eq() > 0) {
      aux.Aeq << p.Aeq, Eigen::MatrixXd::Zero(p.num_eq(), mi);
      aux.beq = p.beq;
    } else {
      aux.beq.resize(0);
    }
    aux.Aineq = Eigen::MatrixXd::Zero(2 * mi, na);
    aux.Aineq.topLeftCorner(mi, n) = p.Aineq;
    aux.Aineq.topRightCorner(mi, mi).setIdentity();
    aux.Aineq.bottomRightCorner(mi, mi).setIdentity();
    aux.bineq.resize(2 * mi);
    aux.bineq.head(mi) = p.bineq;
    aux.bineq.tail(mi).setZero();

    Eigen::VectorXd start(na);
    start.head(n) = x0;
    const Eigen::VectorXd viol = p.bineq - p.Aineq * x0;
    for (int i = 0; i < mi; ++i)
      start[n + i] = std::max(0.0, viol[i]) + 1e-3;

    QpSolution sol = iterate(aux, start, {});
    Eigen::VectorXd x = sol.x.head(n);
    if (max_violation(p, x) > 1e2 * kFeasTol)
      throw QpInfeasible("qp: no feasible point found");
    return x;
  }

  // Main active-set loop from a feasible point.
  QpSolution iterate(const QpProblem& p, Eigen::VectorXd x,
                     std::vector<int> working) {
    const int n = p.n();
    const int me = p.num_eq();
    const int mi = p.num_ineq();
    const int max_iter = 100 * (n + mi + 1);

    QpSolution sol;
    Eigen::VectorXd dir(n), multipliers;
    for (int iter = 1; iter <= max_iter; ++iter) {
      solve_direction(p, x, working, dir, multipliers);
      if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e13)
        throw QpUnbounded("qp: iterates diverge, cost unbounded below");

      if (dir.cwiseAbs().maxCoeff() <=
          kDirTol * (1.0 + x.cwiseAbs().maxCoeff())) {
        // candidate optimum: check working-set multipliers
        int drop = -1;
        double most_negative = -kMultTol;
        for (size_t r = 0; r < working.size(); ++r) {
          const double nu = multipliers[me + static_cast<int>(r)];
          if (nu < most_negative) {
            most_negative = nu;
            drop = static_cast<int>(r);
          }
        }
        if (drop < 0) {
          finalize(p, x, working, multipliers, sol);
          sol.iterations = iter;
          return sol;
        }
        working.erase(working.begin() + drop);
        continue;
      }

      // ratio test against constraints outside the working set
      double alpha = 1.0;
      int blocker = -1;
      for (int i = 0; i < mi; ++i) {
        if (std::find(working.begin(), working.end(), i) != working.end())
          continue;
        const double ad = p.Aineq.row(i).dot(dir);
        if (ad >= -1e-13) continue;
        const double resid =
            std::max(0.0, p.Aineq.row(i).dot(x) - p.bineq[i]);
        const double ratio = resid / (-ad);
        if (ratio < alpha) {
          alpha = ratio;
          blocker = i;
        }
      }
      if (blocker < 0) {
        // full unblocked step along a zero-curvature descent direction
        // means the original cost decreases without bound
        const double curvature = dir.dot(p.H * dir);
        if (curvature <= 1e-12 * dir.squaredNorm())
          throw QpUnbounded("qp: cost unbounded below on feasible set");
      }
      x += alpha * dir;
      if (blocker >= 0) {
        working.push_back(blocker);
        std::sort(working.begin(), working.end());
      }
    }
    throw QpMaxIterations("qp: active-set iteration limit reached");
  }

  // Direction subproblem: min over d of the cost at x + d subject to
  // Aeq d = 0 and the working set held at equality. Multipliers come
  // back in the same solve.
  void solve_direction(const QpProblem& p, const Eigen::VectorXd& x,
                       const std::vector<int>& working, Eigen::VectorXd& dir,
                       Eigen::VectorXd& multipliers) {
    const int n = p.n();
    const int me = p.num_eq();
    const int mw = static_cast<int>(working.size());
    const int dim = n + me + mw;

    Eigen::VectorXd grad = p.H * x + p.f;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    rhs.head(n) = -grad;

    for (int attempt = 0; attempt < 2; ++attempt) {
      kkt.topLeftCorner(n, n) = p.H;
      if (attempt == 1 || regularized_) {
        kkt.topLeftCorner(n, n) += kRegularization *
                                   Eigen::MatrixXd::Identity(n, n);
        regularized_ = true;
      }
      if (me > 0) {
        kkt.block(0, n, n, me) = p.Aeq.transpose();
        kkt.block(n, 0, me, n) = p.Aeq;
      }
      for (int r = 0; r < mw; ++r) {
        kkt.block(0, n + me + r, n, 1) = p.Aineq.row(working[r]).transpose();
        kkt.block(n + me + r, 0, 1, n) = p.Aineq.row(working[r]);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd y = lu.solve(rhs);
      dir = y.head(n);
      multipliers = -y.tail(me + mw);
      return;
    }
    throw Error("qp: singular KKT system");
  }

  void finalize(const QpProblem& p, const Eigen::VectorXd& x,
                const std::vector<int>& working,
                const Eigen::VectorXd& multipliers, QpSolution& sol) {
    const int me = p.num_eq();
    sol.x = x;
    sol.eq_multipliers = multipliers.head(me);
    sol.ineq_multipliers = Eigen::VectorXd::Zero(p.num_ineq());
    sol.active_set = working;
    for (size_t r = 0; r < working.size(); ++r) {
      // clamp roundoff-negative multipliers accepted by kMultTol
      sol.ineq_multipliers[working[r]] =
          std::max(0.0, multipliers[me + static_cast<int>(r)]);
    }
    sol.regularized = regularized_;

    Eigen::VectorXd stat = p.H * x + p.f;
    if (me > 0) stat -= p.Aeq.transpose() * sol.eq_multipliers;
    if (p.num_ineq() > 0) stat -= p.Aineq.transpose() * sol.ineq_multipliers;
    double r = stat.cwiseAbs().maxCoeff();
    r = std::max(r, max_violation(p, x));
    for (int i = 0; i < p.num_ineq(); ++i) {
      r = std::max(r, std::abs(sol.ineq_multipliers[i] *
                               (p.Aineq.row(i).dot(x) - p.bineq[i])));
    }
    sol.kkt_residual = r;
  }
};

}  // namespace rspread
