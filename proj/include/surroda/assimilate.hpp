/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "surroda/common.hpp"
#include "surroda/surrogate.hpp"

namespace surroda::assimilate {

using StateFunction = std::function<VectorXd(const VectorXd&)>;

struct AssimilationProblem {
  VectorXd x_b;
  MatrixXd B;
  VectorXd y_o;
  MatrixXd R;
  std::vector<Interval> bounds;
  double alpha_B = 1.0;
  double alpha_R = 1.0;

  int param_dim() const { return static_cast<int>(x_b.size()); }
  int obs_dim() const { return static_cast<int>(y_o.size()); }
  /// Dimension, bound and scale checks (positive definiteness is checked on
  /// factorization).
  void validate() const;
};

/// Returns a copy with B and R multiplied by the factors.
AssimilationProblem scale_covariances(const AssimilationProblem& prob, double alpha_B, double alpha_R);

/// Cholesky factor of alpha * C; rejects matrices that are not symmetric
/// positive definite, quoting the smallest eigenvalue.
class SpdFactor {
 public:
  SpdFactor() = default;
  SpdFactor(const MatrixXd& c, double alpha, const std::string& what);

  /// v^T (alpha C)^-1 v
  double quadratic(const VectorXd& v) const;
  VectorXd solve(const VectorXd& v) const;
  MatrixXd solve(const MatrixXd& m) const;
  /// L^-1 v with alpha C = L L^T.
  VectorXd whiten(const VectorXd& v) const;
  MatrixXd whiten(const MatrixXd& m) const;

 private:
  Eigen::LLT<MatrixXd> llt_;
};

/// J = 1/2 |x - x_b|^2_B^-1 + 1/2 |G(x) - y_o|^2_R^-1 with scaled covariances.
double cost_3dvar(const VectorXd& x, const StateFunction& model, const AssimilationProblem& prob);

struct OptimizerConfig {
  double tol = 1e-8;            ///< projected-gradient infinity norm
  int max_iter = 500;
  int memory = 10;              ///< stored correction pairs
  double rel_decrease = 1e-12;  ///< stop when (f_k - f_k+1) / max(|f_k|, 1) falls below; 0 disables
};

struct TraceEntry {
  double cost = 0.0;
  double projected_gradient = 0.0;
};

struct OptimizeResult {
  VectorXd x;
  double f = 0.0;
  std::vector<TraceEntry> trace;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;
};

/// Objective returning f(x); writes the gradient when `grad` is non-null.
using Objective = std::function<double(const VectorXd& x, VectorXd* grad)>;

/// Limited-memory BFGS with gradient projection onto a box and projected
/// Armijo backtracking. Infinite bounds are allowed.
OptimizeResult bounded_quasi_newton(const Objective& objective, const VectorXd& x0,
                                    const std::vector<Interval>& bounds, const OptimizerConfig& config = {});

struct AnalysisResult {
  VectorXd x_a;
  VectorXd y_a;   ///< state returned by the solver's model at x_a
  VectorXd nu_a;  ///< reduced analysis (linear surrogate only)
  VectorXd nu_b;
  double cost = 0.0;
  std::vector<TraceEntry> cost_trace;
  int iterations = 0;
  int evaluations = 0;  ///< model or surrogate evaluations made by the solver
  bool converged = false;
  std::string reason;
  bool clipped = false;  ///< x_a had to be projected back into the bounds
};

/// Closed-form analysis of the linear surrogate:
/// (M_x^T B^-1 M_x + M_y^T R^-1 M_y) nu = M_x^T B^-1 (x_b - c_x) + M_y^T R^-1 (y_o - c_y).
AnalysisResult solve_poden3dvar(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob);

/// Reduced cost J~(nu) and its gradient for the linear surrogate.
double poden_cost(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob, const VectorXd& nu,
                  VectorXd* grad = nullptr);

/// J~(x) with the POD-PCE surrogate and its analytic gradient.
double podpce_cost(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob, const VectorXd& x,
                   VectorXd* grad = nullptr);

/// Minimizes J~ in coordinates scaled by the background standard deviations,
/// normalized by its value at x_b (optimizer tolerances are relative to it).
AnalysisResult solve_podpce3dvar(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob,
                                 const OptimizerConfig& config = {});

struct FiniteDifferenceConfig {
  double relative_step = 1e-4;  ///< step as a fraction of each bound width
};

/// Finite-difference 3DVAR against an arbitrary forward model, with the same
/// scaling and normalization as solve_podpce3dvar.
AnalysisResult solve_classical_3dvar(const StateFunction& model, const AssimilationProblem& prob,
                                     const FiniteDifferenceConfig& fd = {}, const OptimizerConfig& config = {});

}  // namespace surroda::assimilate
