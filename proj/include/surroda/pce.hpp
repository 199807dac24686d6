/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include "surroda/common.hpp"

namespace surroda::pce {

/// Orthonormal polynomial family paired with an input distribution.
enum class Family {
  Legendre,  ///< uniform input, standardized support [-1, 1]
  Hermite,   ///< gaussian input, standardized support R
};

std::string to_string(Family family);
Family family_from_string(const std::string& name);

/// Orthonormal univariate polynomial of degree `degree` at standardized t.
double univariate_eval(Family family, int degree, double t);

/// d/dt of univariate_eval.
double univariate_derivative(Family family, int degree, double t);

/// Values (and derivatives if non-null) for degrees 0..max_degree at t.
void univariate_table(Family family, int max_degree, double t, double* values, double* derivatives);

struct MultiIndex {
  std::vector<int> exponents;

  int total_degree() const;
  bool operator==(const MultiIndex&) const = default;
};

/// Every multi-index with total degree <= p, graded-lexicographic: ascending
/// total degree, and within a degree the first input varies slowest
/// (for two inputs of degree 1: (1,0) before (0,1)).
std::vector<MultiIndex> multi_index_set(int input_dim, int max_degree);

/// Number of multi-indices of total degree <= p in m inputs: C(m + p, p).
int term_count(int input_dim, int max_degree);

/// Affine map from a physical input to the standardized support.
///
/// For Legendre inputs `a`/`b` are the physical bounds; for Hermite inputs they
/// are the mean and standard deviation.
struct InputMarginal {
  Family family = Family::Legendre;
  double a = -1.0;
  double b = 1.0;

  double to_standard(double x) const;
  /// dt/dx
  double slope() const;
  /// Legendre inputs must lie inside [a, b] up to 1e-9 of the width.
  bool admits(double x) const;
};

/// Row j, column alpha: prod_i xi_{alpha_i}(T_i(x_ji)). Samples are n x m_x.
MatrixXd design_matrix(const MatrixXd& samples, const std::vector<InputMarginal>& marginals,
                       const std::vector<MultiIndex>& indices);

struct LarsOptions {
  /// Pick the path model with the smallest corrected leave-one-out error.
  /// When false the last (least sparse) path model is returned.
  bool loo_selection = true;
  /// Stop walking the path once this many consecutive models fail to improve
  /// the corrected LOO error; 0 disables early stopping.
  int patience = 0;
};

/// One candidate of the LARS path refit by least squares on its active set.
struct PathModel {
  std::vector<int> active;  ///< design columns, intercept (column 0) included
  double training_mse = 0.0;
  double loo_error = 0.0;  ///< corrected leave-one-out error
};

struct LarsResult {
  VectorXd coefficients;  ///< length n_terms, zero outside the selected support
  double loo_error = 0.0;
  std::vector<int> active;
  std::vector<PathModel> path;
  int selected = 0;  ///< index into path
};

/// Least angle regression on the non-constant columns of `design` (column 0
/// must be the constant term) with hybrid least-squares refits and corrected
/// leave-one-out model selection.
LarsResult fit_lars(const MatrixXd& design, const VectorXd& targets, const LarsOptions& options = {});

/// Sparse per-mode polynomial chaos model nu~(x) = C zeta(T(x)).
class PceModel {
 public:
  PceModel() = default;
  PceModel(std::vector<InputMarginal> marginals, int max_degree, MatrixXd coefficients,
           std::vector<int> mode_degrees, VectorXd empirical_errors, VectorXd validation_bias);

  int input_dim() const { return static_cast<int>(marginals_.size()); }
  int output_dim() const { return static_cast<int>(coefficients_.rows()); }
  int max_degree() const { return max_degree_; }
  const std::vector<InputMarginal>& marginals() const { return marginals_; }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  /// d x n_terms, row k holds the coefficients of output k.
  const MatrixXd& coefficients() const { return coefficients_; }
  const std::vector<int>& mode_degrees() const { return mode_degrees_; }
  /// Validation mean squared error per output.
  const VectorXd& empirical_errors() const { return empirical_errors_; }
  /// Validation mean error (truth minus prediction) per output.
  const VectorXd& validation_bias() const { return validation_bias_; }

  /// Basis vector zeta(T(x)), throws on out-of-bounds input.
  VectorXd basis(const VectorXd& x) const;
  VectorXd evaluate(const VectorXd& x) const;
  /// d x m_x matrix of partial derivatives.
  MatrixXd jacobian(const VectorXd& x) const;

 private:
  void check_input(const VectorXd& x) const;

  std::vector<InputMarginal> marginals_;
  int max_degree_ = 0;
  std::vector<MultiIndex> indices_;
  MatrixXd coefficients_;
  std::vector<int> mode_degrees_;
  VectorXd empirical_errors_;
  VectorXd validation_bias_;
};

inline VectorXd pce_eval(const PceModel& model, const VectorXd& x) { return model.evaluate(x); }
inline MatrixXd pce_jacobian(const PceModel& model, const VectorXd& x) { return model.jacobian(x); }

struct DegreeSelectionConfig {
  int max_degree = 5;
  LarsOptions lars{true, 10};
};

/// Fits one sparse expansion per target column for each degree 0..max_degree on
/// the training set and keeps, per column, the degree with the lowest
/// validation mean squared error (ties go to the smaller degree).
///
/// Inputs are samples x m_x; targets are samples x d.
PceModel select_degree(const MatrixXd& train_inputs, const MatrixXd& train_targets,
                       const MatrixXd& validation_inputs, const MatrixXd& validation_targets,
                       const std::vector<InputMarginal>& marginals,
                       const DegreeSelectionConfig& config = {});

}  // namespace surroda::pce
