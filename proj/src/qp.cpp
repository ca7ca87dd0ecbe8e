#include "dualmpc/qp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dmpc::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Rotation coefficients zeroing b in (a, b); returns the surviving magnitude.
struct Rotation {
  double c = 1.0;
  double s = 0.0;
  double rho = 0.0;
};

Rotation make_rotation(double a, double b) {
  Rotation g;
  if (b == 0.0) {
    g.c = 1.0;
    g.s = 0.0;
    g.rho = a;
    return g;
  }
  const double h = std::hypot(a, b);
  g.c = a / h;
  g.s = b / h;
  g.rho = h;
  return g;
}

/// Working state of the dual active-set iteration. J spans the inverse
/// Cholesky factor rotated so that its first q columns generate the active
/// normals through the upper-triangular R (J = L^-T Q, L^-1 N = Q R).
struct Workspace {
  int n = 0;
  Eigen::MatrixXd J;
  Eigen::MatrixXd R;
  int q = 0;           ///< active-set size
  double r_norm = 1.0; ///< running scale of R for dependence tests

  explicit Workspace(const Eigen::MatrixXd& inv_chol_t)
      : n(static_cast<int>(inv_chol_t.rows())),
        J(inv_chol_t),
        R(Eigen::MatrixXd::Zero(inv_chol_t.rows(), inv_chol_t.rows())) {}

  /// d = J' np; z = step direction in primal space; r = dual step direction.
  void decompose(const Eigen::VectorXd& np, Eigen::VectorXd& d,
                 Eigen::VectorXd& z, Eigen::VectorXd& r) const {
    d = J.transpose() * np;
    z = J.rightCols(n - q) * d.tail(n - q);
    r.head(q) = R.topLeftCorner(q, q)
                    .triangularView<Eigen::Upper>()
                    .solve(d.head(q));
  }

  /// Appends the constraint whose rotated normal is d. Returns false when the
  /// normal is linearly dependent on the active set.
  bool add(Eigen::VectorXd& d) {
    for (int j = n - 1; j >= q + 1; --j) {
      const Rotation g = make_rotation(d[j - 1], d[j]);
      d[j - 1] = g.rho;
      d[j] = 0.0;
      if (g.s != 0.0) {
        for (int row = 0; row < n; ++row) {
          const double t1 = J(row, j - 1);
          const double t2 = J(row, j);
          J(row, j - 1) = g.c * t1 + g.s * t2;
          J(row, j) = -g.s * t1 + g.c * t2;
        }
      }
    }
    ++q;
    R.col(q - 1).head(q) = d.head(q);
    const double eps = std::numeric_limits<double>::epsilon();
    if (std::abs(d[q - 1]) <= eps * r_norm) {
      --q;
      return false;
    }
    r_norm = std::max(r_norm, std::abs(d[q - 1]));
    return true;
  }

  /// Removes the active constraint at position l, restoring triangularity.
  void remove(int l) {
    for (int j = l; j < q - 1; ++j) {
      R.col(j).head(q) = R.col(j + 1).head(q);
    }
    R.col(q - 1).setZero();
    --q;
    for (int j = l; j < q; ++j) {
      if (R(j + 1, j) == 0.0) {
        continue;
      }
      const Rotation g = make_rotation(R(j, j), R(j + 1, j));
      for (int col = j; col < q; ++col) {
        const double t1 = R(j, col);
        const double t2 = R(j + 1, col);
        R(j, col) = g.c * t1 + g.s * t2;
        R(j + 1, col) = -g.s * t1 + g.c * t2;
      }
      for (int row = 0; row < n; ++row) {
        const double t1 = J(row, j);
        const double t2 = J(row, j + 1);
        J(row, j) = g.c * t1 + g.s * t2;
        J(row, j + 1) = -g.s * t1 + g.c * t2;
      }
    }
  }
};

}  // namespace

QpResult solve_qp(const QpProblem& problem) {
  const int n = static_cast<int>(problem.hessian.rows());
  const int p = static_cast<int>(problem.eq.rows());
  const int m = static_cast<int>(problem.ineq.rows());
  if (problem.hessian.cols() != n || problem.linear.size() != n ||
      (p > 0 && problem.eq.cols() != n) || problem.eq_rhs.size() != p ||
      (m > 0 && problem.ineq.cols() != n) || problem.ineq_rhs.size() != m) {
    throw std::invalid_argument("QP dimensions are inconsistent");
  }

  Eigen::LLT<Eigen::MatrixXd> llt(problem.hessian);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("QP Hessian is not positive definite");
  }

  // J starts as L^-T so that J J' = H^-1.
  Workspace ws(llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n)));

  QpResult out;
  out.x = -llt.solve(problem.linear);
  out.eq_multipliers = Eigen::VectorXd::Zero(p);
  out.ineq_multipliers = Eigen::VectorXd::Zero(m);

  const double eps = std::numeric_limits<double>::epsilon();

  // A normal is dependent on the active set iff its rotated tail d2 vanishes.
  // Comparing d2 against the whole of d keeps the test invariant under
  // rescaling of the Hessian (d and d2 live in the same H^-1 metric), which
  // matters when the caller adds large diagonal regularization.
  const auto independent_tail = [n](const Eigen::VectorXd& dd, int q) {
    const double tail_sq = dd.tail(n - q).squaredNorm();
    return tail_sq > 1e-24 * dd.squaredNorm();
  };

  Eigen::VectorXd d(n), z(n), r(n);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  std::vector<int> active;  // 0..p-1 equalities, then p + inequality index
  active.reserve(static_cast<std::size_t>(n));

  // -- Phase 1: install the equality constraints ----------------------------
  for (int i = 0; i < p; ++i) {
    const Eigen::VectorXd np = -problem.eq.row(i).transpose();
    ws.decompose(np, d, z, r);
    const double resid = np.dot(out.x) + problem.eq_rhs[i];
    double t2 = 0.0;
    if (independent_tail(d, ws.q)) {
      t2 = -resid / z.dot(np);
    } else if (std::abs(resid) > 1e-9 * (1.0 + std::abs(problem.eq_rhs[i]))) {
      throw NumericalError("inconsistent (linearly dependent) equality rows");
    }
    out.x += t2 * z;
    u.head(ws.q) -= t2 * r.head(ws.q);
    u[ws.q] = t2;
    if (!ws.add(d)) {
      throw NumericalError("equality rows are linearly dependent");
    }
    active.push_back(i);
  }

  // -- Phase 2: dual active-set loop over the inequalities ------------------
  Eigen::VectorXd slack(m);
  Eigen::VectorXd row_floor(m);
  const int max_iter = 50 * (n + m + 1);
  int iter = 0;
  int ip = -1;
  double sp = 0.0;
  bool need_choice = true;

  while (true) {
    if (++iter > max_iter) {
      throw NumericalError("dual active-set iteration limit exceeded");
    }

    if (need_choice) {
      // Most violated inactive inequality (<= form: violation is positive).
      // Each row gets its own noise floor so that large coefficients in one
      // row cannot mask genuine violations of another.
      for (int i = 0; i < m; ++i) {
        const double ax = problem.ineq.row(i).dot(out.x);
        slack[i] = ax - problem.ineq_rhs[i];
        row_floor[i] = 100.0 * eps *
                       (1.0 + std::abs(ax) + std::abs(problem.ineq_rhs[i]));
      }
      for (int k = p; k < static_cast<int>(active.size()); ++k) {
        slack[active[static_cast<std::size_t>(k)] - p] = 0.0;
      }
      ip = -1;
      double worst = 0.0;
      for (int i = 0; i < m; ++i) {
        if (slack[i] - row_floor[i] > worst) {
          worst = slack[i] - row_floor[i];
          ip = i;
        }
      }
      if (ip < 0) {
        break;  // primal feasible => optimal
      }
      sp = -slack[ip];  // signed slack in the >= convention used below
      u[ws.q] = 0.0;
    }

    const Eigen::VectorXd np = -problem.ineq.row(ip).transpose();
    ws.decompose(np, d, z, r);

    // Largest dual step the active inequalities allow before one hits zero.
    double t1 = kInf;
    int blocking = -1;
    for (int k = p; k < ws.q; ++k) {
      if (r[k] > 0.0 && u[k] / r[k] < t1) {
        t1 = u[k] / r[k];
        blocking = k;
      }
    }
    // Full primal step restoring feasibility of constraint ip.
    double t2 = kInf;
    if (independent_tail(d, ws.q)) {
      t2 = -sp / z.dot(np);
    }
    const double t = std::min(t1, t2);

    if (t >= kInf) {
      out.feasible = false;  // dual unbounded => primal infeasible
      out.iterations = iter;
      return out;
    }

    if (t2 >= kInf) {
      // Pure dual step: drop the blocking constraint and retry.
      u.head(ws.q) -= t * r.head(ws.q);
      u[ws.q] += t;
      const int drop = blocking;
      u.segment(drop, ws.q - drop - 1) = u.segment(drop + 1, ws.q - drop - 1);
      u[ws.q - 1] = u[ws.q];
      active.erase(active.begin() + drop);
      ws.remove(drop);
      need_choice = false;
      continue;
    }

    out.x += t * z;
    sp += t * z.dot(np);
    u.head(ws.q) -= t * r.head(ws.q);
    u[ws.q] += t;

    if (t == t2) {
      if (!ws.add(d)) {
        // Numerically dependent at the solution boundary; treat as resolved.
        need_choice = true;
        continue;
      }
      active.push_back(p + ip);
      need_choice = true;
    } else {
      const int drop = blocking;
      u.segment(drop, ws.q - drop - 1) = u.segment(drop + 1, ws.q - drop - 1);
      u[ws.q - 1] = u[ws.q];  // candidate multiplier carries over
      active.erase(active.begin() + drop);
      ws.remove(drop);
      // Re-evaluate the violated constraint at the new point.
      sp = -(problem.ineq.row(ip).dot(out.x) - problem.ineq_rhs[ip]);
      need_choice = false;
    }
  }

  for (int k = 0; k < static_cast<int>(active.size()); ++k) {
    const int id = active[static_cast<std::size_t>(k)];
    if (id < p) {
      out.eq_multipliers[id] = u[k];
    } else {
      out.ineq_multipliers[id - p] = u[k];
    }
  }
  out.feasible = true;
  out.objective = 0.5 * out.x.dot(problem.hessian * out.x) +
                  problem.linear.dot(out.x);
  out.iterations = iter;
  return out;
}

}  // namespace dmpc::qp
