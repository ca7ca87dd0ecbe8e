#include "dualmpc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "dualmpc/qp.hpp"

namespace dmpc::nlp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Directional finite-difference check of a callback's derivatives along a
/// few deterministic pseudo-random directions. Returns the worst relative
/// mismatch.
template <typename ValueFn, typename DirDerivFn>
double directional_mismatch(const Eigen::VectorXd& x0, ValueFn value,
                            DirDerivFn directional, int outputs) {
  std::mt19937 rng(0x51c3u + static_cast<unsigned>(x0.size()));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double h = 1e-6 * (1.0 + x0.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::VectorXd dir(x0.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) {
      dir[i] = gauss(rng);
    }
    dir.normalize();
    const Eigen::VectorXd fp = value(x0 + h * dir);
    const Eigen::VectorXd fm = value(x0 - h * dir);
    const Eigen::VectorXd fd = (fp - fm) / (2.0 * h);
    const Eigen::VectorXd an = directional(x0, dir);
    for (int k = 0; k < outputs; ++k) {
      const double denom = std::max({1.0, std::abs(fd[k]), std::abs(an[k])});
      worst = std::max(worst, std::abs(fd[k] - an[k]) / denom);
    }
  }
  return worst;
}

void self_check(const OcpSpec& spec, const Eigen::VectorXd& u0) {
  constexpr double kTol = 1e-4;
  {
    const double worst = directional_mismatch(
        u0,
        [&](const Eigen::VectorXd& u) {
          return Eigen::VectorXd::Constant(1, spec.objective(u, nullptr)).eval();
        },
        [&](const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
          Eigen::VectorXd grad(u.size());
          spec.objective(u, &grad);
          return Eigen::VectorXd::Constant(1, grad.dot(d)).eval();
        },
        1);
    if (worst > kTol) {
      throw std::invalid_argument(
          "derivative self-check failed for the objective (mismatch " +
          std::to_string(worst) + ")");
    }
  }
  const auto check_block = [&](const ConstraintBlock& block, const char* name) {
    if (block.count == 0) {
      return;
    }
    const double worst = directional_mismatch(
        u0,
        [&](const Eigen::VectorXd& u) {
          Eigen::VectorXd v(block.count);
          block.eval(u, v, nullptr);
          return v;
        },
        [&](const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
          Eigen::VectorXd v(block.count);
          Eigen::MatrixXd jac(block.count, u.size());
          block.eval(u, v, &jac);
          return (jac * d).eval();
        },
        block.count);
    if (worst > kTol) {
      throw std::invalid_argument(
          std::string("derivative self-check failed for the ") + name +
          " constraint block (mismatch " + std::to_string(worst) + ")");
    }
  };
  check_block(spec.hard, "hard");
  check_block(spec.soft, "soft");
}

}  // namespace

OcpProblem OcpProblem::build(OcpSpec spec, const Eigen::VectorXd& warm_start,
                             bool verify_derivatives) {
  if (spec.num_inputs < 0) {
    throw std::invalid_argument("OcpProblem: negative input count");
  }
  if (spec.num_inputs == 0 && (spec.hard.count > 0 || spec.soft.count > 0)) {
    throw std::invalid_argument(
        "OcpProblem: constraints require at least one decision variable");
  }
  if (!spec.objective) {
    throw std::invalid_argument("OcpProblem: objective callback missing");
  }
  if (spec.input_lower.size() != spec.num_inputs ||
      spec.input_upper.size() != spec.num_inputs) {
    throw std::invalid_argument("OcpProblem: bound size mismatch");
  }
  if ((spec.input_lower.array() > spec.input_upper.array()).any()) {
    throw std::invalid_argument("OcpProblem: lower bound exceeds upper bound");
  }
  if (warm_start.size() != spec.num_inputs) {
    throw std::invalid_argument("OcpProblem: warm start size mismatch");
  }
  if ((spec.hard.count > 0 && !spec.hard.eval) ||
      (spec.soft.count > 0 && !spec.soft.eval)) {
    throw std::invalid_argument("OcpProblem: constraint callback missing");
  }
  if (!(spec.soft_penalty > 0.0)) {
    throw std::invalid_argument("OcpProblem: soft penalty must be positive");
  }

  OcpProblem p;
  const int nu = spec.num_inputs;
  const int ns = spec.soft.count;

  Eigen::VectorXd u0 =
      warm_start.cwiseMax(spec.input_lower).cwiseMin(spec.input_upper);
  if (verify_derivatives && nu > 0) {
    self_check(spec, u0);
  }

  p.lower_.resize(nu + ns);
  p.upper_.resize(nu + ns);
  p.lower_ << spec.input_lower, Eigen::VectorXd::Zero(ns);
  p.upper_ << spec.input_upper, Eigen::VectorXd::Constant(ns, kInf);

  p.initial_.resize(nu + ns);
  p.initial_.head(nu) = u0;
  if (ns > 0) {
    Eigen::VectorXd soft_vals(ns);
    spec.soft.eval(u0, soft_vals, nullptr);
    p.initial_.tail(ns) = soft_vals.cwiseMax(0.0);
  }
  p.spec_ = std::move(spec);
  return p;
}

double OcpProblem::objective(const Eigen::VectorXd& x,
                             Eigen::VectorXd* gradient) const {
  const int nu = num_inputs();
  const int ns = num_slacks();
  const Eigen::VectorXd u = x.head(nu);
  double value;
  if (gradient != nullptr) {
    gradient->resize(nu + ns);
    Eigen::VectorXd grad_u(nu);
    value = spec_.objective(u, &grad_u);
    gradient->head(nu) = grad_u;
    gradient->tail(ns).setConstant(spec_.soft_penalty);
  } else {
    value = spec_.objective(u, nullptr);
  }
  return value + spec_.soft_penalty * x.tail(ns).sum();
}

void OcpProblem::constraints(const Eigen::VectorXd& x, Eigen::VectorXd& values,
                             Eigen::MatrixXd* jacobian) const {
  const int nu = num_inputs();
  const int ns = num_slacks();
  const int nh = spec_.hard.count;
  const Eigen::VectorXd u = x.head(nu);
  values.resize(nh + ns);
  if (jacobian != nullptr) {
    jacobian->setZero(nh + ns, nu + ns);
  }
  if (nh > 0) {
    Eigen::VectorXd v(nh);
    if (jacobian != nullptr) {
      Eigen::MatrixXd jac(nh, nu);
      spec_.hard.eval(u, v, &jac);
      jacobian->topLeftCorner(nh, nu) = jac;
    } else {
      spec_.hard.eval(u, v, nullptr);
    }
    values.head(nh) = v;
  }
  if (ns > 0) {
    Eigen::VectorXd v(ns);
    if (jacobian != nullptr) {
      Eigen::MatrixXd jac(ns, nu);
      spec_.soft.eval(u, v, &jac);
      jacobian->bottomLeftCorner(ns, nu) = jac;
      jacobian->bottomRightCorner(ns, ns) =
          -Eigen::MatrixXd::Identity(ns, ns);
    } else {
      spec_.soft.eval(u, v, nullptr);
    }
    values.tail(ns) = v - x.tail(ns);
  }
}

namespace {

/// Box rows (finite bounds only) appended after the general rows so one QP
/// covers everything the KKT bookkeeping needs.
struct QpLayout {
  std::vector<int> lower_rows;  ///< variable index per appended -x <= -lb row
  std::vector<int> upper_rows;  ///< variable index per appended  x <=  ub row
};

qp::QpProblem build_subproblem(const Eigen::MatrixXd& hessian,
                               const Eigen::VectorXd& gradient,
                               const Eigen::MatrixXd& cons_jac,
                               const Eigen::VectorXd& cons_val,
                               const Eigen::VectorXd& x,
                               const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, QpLayout& layout) {
  const int n = static_cast<int>(x.size());
  const int mc = static_cast<int>(cons_val.size());
  layout.lower_rows.clear();
  layout.upper_rows.clear();
  for (int i = 0; i < n; ++i) {
    if (lower[i] > -kInf) {
      layout.lower_rows.push_back(i);
    }
    if (upper[i] < kInf) {
      layout.upper_rows.push_back(i);
    }
  }
  const int nl = static_cast<int>(layout.lower_rows.size());
  const int nuB = static_cast<int>(layout.upper_rows.size());

  qp::QpProblem sub;
  sub.hessian = hessian;
  sub.linear = gradient;
  sub.eq.resize(0, n);
  sub.eq_rhs.resize(0);
  sub.ineq.setZero(mc + nl + nuB, n);
  sub.ineq_rhs.resize(mc + nl + nuB);
  sub.ineq.topRows(mc) = cons_jac;
  sub.ineq_rhs.head(mc) = -cons_val;
  for (int k = 0; k < nl; ++k) {
    const int i = layout.lower_rows[static_cast<std::size_t>(k)];
    sub.ineq(mc + k, i) = -1.0;
    sub.ineq_rhs[mc + k] = x[i] - lower[i];
  }
  for (int k = 0; k < nuB; ++k) {
    const int i = layout.upper_rows[static_cast<std::size_t>(k)];
    sub.ineq(mc + nl + k, i) = 1.0;
    sub.ineq_rhs[mc + nl + k] = upper[i] - x[i];
  }
  return sub;
}

/// Relaxes the general rows with one shared elastic variable t >= 0 so the
/// subproblem is always feasible; the elastic carries a steep linear cost.
qp::QpResult solve_elastic(const qp::QpProblem& sub, int mc) {
  const int n = static_cast<int>(sub.hessian.rows());
  const int rows = static_cast<int>(sub.ineq.rows());
  qp::QpProblem ext;
  ext.hessian.setZero(n + 1, n + 1);
  ext.hessian.topLeftCorner(n, n) = sub.hessian;
  ext.hessian(n, n) = std::max(1.0, sub.hessian.trace() / n);
  ext.linear.resize(n + 1);
  ext.linear << sub.linear, 1e6;
  ext.eq.resize(0, n + 1);
  ext.eq_rhs.resize(0);
  ext.ineq.setZero(rows + 1, n + 1);
  ext.ineq.topLeftCorner(rows, n) = sub.ineq;
  ext.ineq.col(n).head(mc).setConstant(-1.0);  // general rows get the elastic
  ext.ineq(rows, n) = -1.0;                    // t >= 0
  ext.ineq_rhs.resize(rows + 1);
  ext.ineq_rhs << sub.ineq_rhs, 0.0;
  qp::QpResult r = solve_qp(ext);
  if (r.feasible) {
    qp::QpResult trimmed;
    trimmed.feasible = true;
    trimmed.x = r.x.head(n);
    trimmed.ineq_multipliers = r.ineq_multipliers.head(rows);
    trimmed.eq_multipliers.resize(0);
    trimmed.objective = r.objective;
    trimmed.iterations = r.iterations;
    return trimmed;
  }
  return r;
}

struct KktResiduals {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
};

KktResiduals kkt_residuals(const Eigen::VectorXd& gradient,
                           const Eigen::MatrixXd& cons_jac,
                           const Eigen::VectorXd& cons_val,
                           const Eigen::VectorXd& x,
                           const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper,
                           const Eigen::VectorXd& multipliers,
                           const QpLayout& layout) {
  const int mc = static_cast<int>(cons_val.size());
  const int nl = static_cast<int>(layout.lower_rows.size());
  KktResiduals res;
  Eigen::VectorXd station = gradient;
  if (mc > 0) {
    station += cons_jac.transpose() * multipliers.head(mc);
  }
  for (int k = 0; k < nl; ++k) {
    const int i = layout.lower_rows[static_cast<std::size_t>(k)];
    station[i] -= multipliers[mc + k];
  }
  for (int k = 0; k < static_cast<int>(layout.upper_rows.size()); ++k) {
    const int i = layout.upper_rows[static_cast<std::size_t>(k)];
    station[i] += multipliers[mc + nl + k];
  }
  res.stationarity = station.cwiseAbs().maxCoeff();

  double feas = 0.0;
  double compl_res = 0.0;
  for (int i = 0; i < mc; ++i) {
    feas = std::max(feas, cons_val[i]);
    compl_res = std::max(compl_res, std::abs(multipliers[i] * cons_val[i]));
  }
  for (int k = 0; k < nl; ++k) {
    const int i = layout.lower_rows[static_cast<std::size_t>(k)];
    feas = std::max(feas, lower[i] - x[i]);
    compl_res = std::max(
        compl_res, std::abs(multipliers[mc + k] * (lower[i] - x[i])));
  }
  for (int k = 0; k < static_cast<int>(layout.upper_rows.size()); ++k) {
    const int i = layout.upper_rows[static_cast<std::size_t>(k)];
    feas = std::max(feas, x[i] - upper[i]);
    compl_res = std::max(
        compl_res, std::abs(multipliers[mc + nl + k] * (x[i] - upper[i])));
  }
  res.feasibility = std::max(feas, 0.0);
  res.complementarity = compl_res;
  return res;
}

double merit(double objective, const Eigen::VectorXd& cons_val, double penalty) {
  return objective + penalty * cons_val.cwiseMax(0.0).sum();
}

}  // namespace

SolveResult solve(const OcpProblem& problem, const SolveOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = problem.num_vars();
  const int nu = problem.num_inputs();
  const int mc = problem.num_constraints();

  SolveResult result;
  if (n == 0) {
    // Degenerate zero-length horizon: nothing to decide.
    result.status = SolveStatus::Converged;
    result.inputs.resize(0);
    result.slacks.resize(0);
    result.objective = problem.objective(Eigen::VectorXd(), nullptr);
    result.solve_time_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t_start)
            .count();
    return result;
  }
  Eigen::VectorXd x = options.warm_start
                          ? problem.initial_point()
                          : Eigen::VectorXd::Zero(n)
                                .cwiseMax(problem.lower())
                                .cwiseMin(problem.upper());
  if (!options.warm_start && problem.num_slacks() > 0) {
    // Cold start still needs feasible slacks.
    Eigen::VectorXd g(mc);
    problem.constraints(x, g, nullptr);
    x.tail(problem.num_slacks()) =
        (g.tail(problem.num_slacks()) + x.tail(problem.num_slacks()))
            .cwiseMax(0.0);
  }

  Eigen::MatrixXd hessian = Eigen::MatrixXd::Identity(n, n);
  double levenberg = 0.0;
  double merit_penalty = 1.0;

  Eigen::VectorXd gradient(n);
  double objective = problem.objective(x, &gradient);
  Eigen::VectorXd cons_val(mc);
  Eigen::MatrixXd cons_jac(mc, n);
  problem.constraints(x, cons_val, &cons_jac);

  const auto finalize = [&](SolveStatus status, int iters,
                            const KktResiduals& res) {
    result.status = status;
    result.inputs = x.head(nu);
    result.slacks = x.tail(problem.num_slacks());
    result.objective = objective - problem.soft_penalty() *
                                       x.tail(problem.num_slacks()).sum();
    result.stationarity = res.stationarity;
    result.feasibility = res.feasibility;
    result.complementarity = res.complementarity;
    result.iterations = iters;
    result.penalty_saturated =
        problem.num_slacks() > 0 &&
        x.tail(problem.num_slacks()).maxCoeff() > 1e-6;
    result.solve_time_ms =
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - t_start)
            .count();
    return result;
  };

  QpLayout layout;
  KktResiduals res;
  int iter = 0;
  int polish_budget = 30;

  // When regularization maxes out, a near-feasible iterate is still usable;
  // only a genuinely inconsistent one warrants a hard failure.
  const auto exhausted_status = [&]() {
    return res.feasibility <= std::sqrt(options.kkt_tolerance)
               ? SolveStatus::MaxIterations
               : SolveStatus::NumericalFailure;
  };

  while (true) {
    // -- QP subproblem at the current iterate ------------------------------
    Eigen::MatrixXd qp_hessian = hessian;
    if (levenberg > 0.0) {
      qp_hessian += levenberg * Eigen::MatrixXd::Identity(n, n);
    }
    qp::QpProblem sub = build_subproblem(qp_hessian, gradient, cons_jac,
                                         cons_val, x, problem.lower(),
                                         problem.upper(), layout);
    qp::QpResult qp_res;
    bool qp_ok = true;
    bool used_elastic = false;
    try {
      qp_res = qp::solve_qp(sub);
    } catch (const NumericalError&) {
      qp_ok = false;
    }
    if (qp_ok && !qp_res.feasible) {
      qp_res = solve_elastic(sub, mc);
      ++result.elastic_steps;
      qp_ok = qp_res.feasible;
      used_elastic = qp_ok;
    }
    if (!qp_ok) {
      levenberg = std::max(1e-6, levenberg * 10.0);
      if (levenberg > 1e8) {
        return finalize(exhausted_status(), iter, res);
      }
      continue;
    }

    const Eigen::VectorXd p = qp_res.x;
    const Eigen::VectorXd& multipliers = qp_res.ineq_multipliers;

    // -- convergence check with the fresh multipliers -----------------------
    res = kkt_residuals(gradient, cons_jac, cons_val, x, problem.lower(),
                        problem.upper(), multipliers, layout);
    const double tol = options.kkt_tolerance;
    if (res.stationarity <= tol && res.feasibility <= tol &&
        res.complementarity <= tol) {
      return finalize(SolveStatus::Converged, iter, res);
    }
    if (iter >= options.max_iterations) {
      return finalize(SolveStatus::MaxIterations, iter, res);
    }
    ++iter;

    // -- L1 merit line search ----------------------------------------------
    // Multipliers from a relaxed QP are artifacts of the elastic objective
    // and would poison the penalty for the rest of the solve; only genuine
    // subproblems move it. The relief valve undoes past overshoot.
    if (!used_elastic) {
      const double lam_max =
          multipliers.size() > 0 ? multipliers.cwiseAbs().maxCoeff() : 0.0;
      const double needed = 2.0 * lam_max + 1.0;
      if (merit_penalty < needed) {
        merit_penalty = needed;
      } else if (merit_penalty > 100.0 * needed) {
        merit_penalty = 10.0 * needed;
      }
    }
    const double viol = cons_val.cwiseMax(0.0).sum();
    const double phi0 = objective + merit_penalty * viol;
    // Directional derivative bound of the merit: a relaxed step only shrinks
    // the linearized violation to its elastic residual, not to zero, so the
    // bound has to use the violation left at the end of the step.
    double viol_end = 0.0;
    if (mc > 0) {
      viol_end = (cons_val + cons_jac * p).cwiseMax(0.0).sum();
    }
    const double descent =
        gradient.dot(p) + merit_penalty * (viol_end - viol);

    bool polish = false;
    if (!(descent < 0.0)) {
      // No descent available: either the iterate is numerically spent or we
      // are at the noise floor near a solution. A full Newton-type step still
      // contracts the KKT residual there, so take it unguarded a few times.
      if (p.cwiseAbs().maxCoeff() < 1e-12) {
        return finalize(SolveStatus::MaxIterations, iter, res);
      }
      if (!used_elastic && res.feasibility <= options.kkt_tolerance &&
          p.cwiseAbs().maxCoeff() <= 1e-3 && polish_budget > 0) {
        --polish_budget;
        polish = true;
      } else {
        levenberg = std::max(1e-6, levenberg * 10.0);
        if (levenberg > 1e8) {
          return finalize(exhausted_status(), iter, res);
        }
        continue;
      }
    }

    double alpha = 1.0;
    bool accepted = polish;
    double new_objective = 0.0;
    Eigen::VectorXd x_new;
    Eigen::VectorXd cons_new(mc);
    if (polish) {
      x_new = x + p;
    }
    for (int bt = 0; !accepted && bt < 40; ++bt) {
      x_new = x + alpha * p;
      new_objective = problem.objective(x_new, nullptr);
      problem.constraints(x_new, cons_new, nullptr);
      const double phi = merit(new_objective, cons_new, merit_penalty);
      if (phi <= phi0 + 1e-4 * alpha * descent) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      levenberg = std::max(1e-6, levenberg * 10.0);
      if (levenberg > 1e8) {
        return finalize(exhausted_status(), iter, res);
      }
      continue;
    }
    levenberg *= 0.5;
    if (levenberg < 1e-12) {
      levenberg = 0.0;
    }

    // -- damped BFGS update on the Lagrangian gradient ----------------------
    Eigen::VectorXd grad_new(n);
    new_objective = problem.objective(x_new, &grad_new);
    Eigen::MatrixXd jac_new(mc, n);
    problem.constraints(x_new, cons_new, &jac_new);

    const Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd ygrad = grad_new - gradient;
    if (mc > 0) {
      ygrad += (jac_new - cons_jac).transpose() * multipliers.head(mc);
    }
    const Eigen::VectorXd hs = hessian * s;
    const double shs = s.dot(hs);
    const double sy = s.dot(ygrad);
    // Elastic multipliers would also corrupt the curvature estimate.
    if (!used_elastic && shs > 1e-14) {
      double theta = 1.0;
      if (sy < 0.2 * shs) {
        theta = 0.8 * shs / (shs - sy);
      }
      const Eigen::VectorXd y_tilde = theta * ygrad + (1.0 - theta) * hs;
      const double sy_tilde = s.dot(y_tilde);
      if (sy_tilde > 1e-14) {
        hessian -= (hs * hs.transpose()) / shs;
        hessian += (y_tilde * y_tilde.transpose()) / sy_tilde;
        hessian = 0.5 * (hessian + hessian.transpose()).eval();
      }
    }

    x = x_new;
    objective = new_objective;
    gradient = grad_new;
    cons_jac = jac_new;
    cons_val = cons_new;
  }
}

}  // namespace dmpc::nlp
