#pragma once

#include <functional>

#include <Eigen/Dense>

#include "dualmpc/types.hpp"

namespace dmpc::nlp {

/// A block of inequality constraints over the stacked input sequence,
/// convention g(inputs) <= 0. `eval` fills `values` (size `count`) and, when
/// `jacobian` is non-null, the count x num_inputs Jacobian.
struct ConstraintBlock {
  int count = 0;
  std::function<void(const Eigen::VectorXd& inputs, Eigen::VectorXd& values,
                     Eigen::MatrixXd* jacobian)>
      eval;
};

/// Optimal-control problem over a stacked input sequence (single shooting:
/// states are internal to the callbacks). Soft constraints are enforced with
/// an exact L1 penalty through explicit slack variables.
struct OcpSpec {
  int num_inputs = 0;  ///< length of the stacked input vector
  Eigen::VectorXd input_lower;
  Eigen::VectorXd input_upper;
  std::function<double(const Eigen::VectorXd& inputs, Eigen::VectorXd* gradient)>
      objective;
  ConstraintBlock hard;
  ConstraintBlock soft;
  double soft_penalty = 1e4;
};

/// Canonical smooth NLP assembled from an OcpSpec: decision vector
/// x = [inputs; slacks], variable bounds, general constraints g(x) <= 0
/// (hard rows first, then softened rows g_soft - s <= 0), objective
/// J(inputs) + penalty * sum(slacks).
class OcpProblem {
 public:
  /// Validates bounds, runs a directional finite-difference self-check of
  /// every derivative callback at the warm-start point (relative tolerance
  /// 1e-4), and seeds the slacks at their feasible minimum. Throws
  /// std::invalid_argument naming the offending block on failure. A zero-size
  /// input vector builds a degenerate constraint-free problem whose solve
  /// returns an empty input vector immediately.
  static OcpProblem build(OcpSpec spec, const Eigen::VectorXd& warm_start,
                          bool verify_derivatives = true);

  int num_vars() const { return num_inputs() + num_slacks(); }
  int num_inputs() const { return spec_.num_inputs; }
  int num_slacks() const { return spec_.soft.count; }
  int num_constraints() const { return spec_.hard.count + spec_.soft.count; }

  const Eigen::VectorXd& initial_point() const { return initial_; }
  const Eigen::VectorXd& lower() const { return lower_; }
  const Eigen::VectorXd& upper() const { return upper_; }
  double soft_penalty() const { return spec_.soft_penalty; }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* gradient) const;
  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& values,
                   Eigen::MatrixXd* jacobian) const;

 private:
  OcpSpec spec_;
  Eigen::VectorXd initial_;
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

enum class SolveStatus {
  Converged,         ///< KKT residuals below tolerance
  MaxIterations,     ///< iteration cap hit; best iterate returned
  NumericalFailure,  ///< line search / subproblem could not proceed
};

struct SolveOptions {
  double kkt_tolerance = 1e-6;
  int max_iterations = 100;
  bool warm_start = true;  ///< start from the problem's initial point
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericalFailure;
  Eigen::VectorXd inputs;
  Eigen::VectorXd slacks;
  double objective = 0.0;       ///< spec objective without the slack penalty
  double stationarity = 0.0;    ///< inf-norm of the Lagrangian gradient
  double feasibility = 0.0;     ///< largest constraint violation
  double complementarity = 0.0; ///< largest |multiplier * residual|
  int iterations = 0;
  double solve_time_ms = 0.0;
  bool penalty_saturated = false;  ///< a slack stayed active at the solution
  int elastic_steps = 0;           ///< QP subproblems needing relaxation
};

/// Sequential quadratic programming with a damped BFGS Lagrangian Hessian,
/// an L1 merit line search, and dense dual active-set QP subproblems.
/// Deterministic: identical inputs produce the identical iterate sequence.
SolveResult solve(const OcpProblem& problem, const SolveOptions& options);

}  // namespace dmpc::nlp
