#pragma once

#include <Eigen/Dense>

#include "dualmpc/types.hpp"

namespace dmpc::qp {

/// Strictly convex quadratic program
///   minimize    0.5 x' H x + g' x
///   subject to  A_eq x  = b_eq
///               A_in x <= b_in
/// H must be symmetric positive definite.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd eq;       ///< rows are equality normals (may be 0 x n)
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq;     ///< rows are inequality normals (may be 0 x n)
  Eigen::VectorXd ineq_rhs;
};

struct QpResult {
  bool feasible = false;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;    ///< stationarity: H x + g + A_in' lam + A_eq' mu = 0
  Eigen::VectorXd ineq_multipliers;  ///< lam >= 0, lam_i (A_in x - b_in)_i = 0
  double objective = 0.0;
  int iterations = 0;
};

/// Dual active-set method: starts from the unconstrained minimizer and adds
/// violated constraints one at a time, staying dual feasible throughout.
/// Returns feasible=false when the constraints are inconsistent. Throws
/// NumericalError for an indefinite Hessian or inconsistent equality rows.
QpResult solve_qp(const QpProblem& problem);

}  // namespace dmpc::qp
