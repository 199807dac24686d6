/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include "surroda/common.hpp"
#include "surroda/pce.hpp"
#include "surroda/pod.hpp"

namespace surroda::surrogate {

/// Per-component centering and reduction fitted on an ensemble (rows are
/// components, columns members). Components without spread keep scale 1.
struct Standardizer {
  VectorXd mean;
  VectorXd scale;
  std::vector<int> constant_components;

  static Standardizer fit(const MatrixXd& ensemble);
  static Standardizer identity(int dim);

  int dim() const { return static_cast<int>(mean.size()); }
  VectorXd apply(const VectorXd& v) const;
  MatrixXd apply_columns(const MatrixXd& m) const;
  VectorXd invert(const VectorXd& z) const;
  /// D^-1 C D^-1 for a covariance expressed in original units.
  MatrixXd apply_covariance(const MatrixXd& c) const;
};

/// Linear surrogate from a POD of stacked, standardized parameters and states.
struct PodEnSurrogate {
  Standardizer x_standardizer;
  Standardizer y_standardizer;
  pod::PodBasis joint;  ///< rows 0..m_x-1 are parameters
  int param_dim = 0;

  int state_dim() const { return joint.state_dim() - param_dim; }
  int rank() const { return joint.retained(); }
  /// Retained blocks in standardized units.
  MatrixXd phi_x() const;
  MatrixXd phi_y() const;
  VectorXd sigma() const;

  /// Affine maps nu -> x = c_x + M_x nu and nu -> y = c_y + M_y nu in
  /// original units.
  VectorXd offset_x() const;
  VectorXd offset_y() const;
  MatrixXd map_x() const;
  MatrixXd map_y() const;
};

/// Parameters are m_x x n, states m_y x n.
PodEnSurrogate build_poden(const MatrixXd& params, const MatrixXd& states,
                           const pod::TruncationCriterion& criterion);

struct PodEnPrediction {
  VectorXd x;
  VectorXd y;
};
/// Prediction in original units.
PodEnPrediction poden_predict(const PodEnSurrogate& s, const VectorXd& nu);
/// Prediction in the standardized units the decomposition lives in.
PodEnPrediction poden_predict_standardized(const PodEnSurrogate& s, const VectorXd& nu);

/// State POD plus one sparse expansion per retained mode.
struct PodPceSurrogate {
  pod::PodBasis state_basis;
  pce::PceModel pce;
  std::vector<Interval> bounds;
  int ensemble_size = 0;
  std::vector<int> train_members;
  std::vector<int> validation_members;

  int rank() const { return state_basis.retained(); }
  /// Keeps the first d modes; per-mode expansions are independent of d.
  PodPceSurrogate with_modes(int d) const;
};

struct PodPceConfig {
  pce::DegreeSelectionConfig degree;
  double train_fraction = 0.75;
};

/// `bounds` declare the uniform input support of each parameter.
PodPceSurrogate build_podpce(const MatrixXd& params, const MatrixXd& states,
                             const pod::TruncationCriterion& criterion, const std::vector<Interval>& bounds,
                             const PodPceConfig& config, std::uint64_t split_seed);

/// G~(x) = mean + Phi_d Sigma_d nu~(x).
VectorXd podpce_predict(const PodPceSurrogate& s, const VectorXd& x);
/// d(G~)/dx, m_y x m_x.
MatrixXd podpce_jacobian(const PodPceSurrogate& s, const VectorXd& x);

enum class CovarianceKind { R, RTilde, RTildeCorrected };
std::string to_string(CovarianceKind kind);
CovarianceKind covariance_kind_from_string(const std::string& name);

struct ErrorCovariance {
  MatrixXd matrix;
  CovarianceKind kind = CovarianceKind::R;
  MatrixXd pod_term;
  MatrixXd pce_term;
  /// Modes whose bias-corrected variance went negative and was set to 0.
  std::vector<int> floored_modes;
};

/// R + (1/(n-1)) Phi_c Lambda_c Phi_c^T + Phi_d diag(lambda_k delta_k) Phi_d^T
/// for a basis truncated at d and per-mode variances `pce_variance`.
ErrorCovariance assemble_error_covariance(const pod::PodBasis& basis, int ensemble_size,
                                          const VectorXd& pce_variance, const MatrixXd& R);

ErrorCovariance metamodel_error_covariance(const PodPceSurrogate& s, const MatrixXd& R);

/// Replaces delta_k by delta_k - bias_k^2 (floored at 0).
ErrorCovariance corrected_error_covariance(const PodPceSurrogate& s, const MatrixXd& R,
                                           const VectorXd& validation_bias);

/// Truncation term only, for the linear surrogate (in original state units).
ErrorCovariance poden_error_covariance(const PodEnSurrogate& s, const MatrixXd& R);

}  // namespace surroda::surrogate
