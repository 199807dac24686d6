/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <variant>
#include <vector>

#include "surroda/common.hpp"

namespace surroda::pod {

/// Ensemble of snapshots: one column per member, one row per state component.
struct SnapshotMatrix {
  MatrixXd data;
  std::vector<std::string> row_labels;
  std::vector<std::string> member_ids;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

/// Rejects matrices with fewer than two members or non-finite entries.
void validate(const SnapshotMatrix& snapshots);

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kZeroSingularValueRatio = 1e-12;

/// A block of the decomposition: modes (m x k), singular values (k),
/// coefficients (n x k).
struct PodBlock {
  MatrixXd modes;
  VectorXd singular_values;
  MatrixXd coefficients;

  VectorXd eigenvalues() const { return singular_values.array().square(); }
};

/// Centered snapshot decomposition U = mean + modes * diag(sigma) * coefficients^T.
///
/// The full decomposition is always kept; `retained()` selects the leading
/// block used by projection and reconstruction, the remainder is the
/// complement that feeds truncation-error estimates.
class PodBasis {
 public:
  PodBasis() = default;
  PodBasis(VectorXd mean, MatrixXd modes, VectorXd singular_values, MatrixXd coefficients,
           int retained);

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& modes() const { return modes_; }
  const VectorXd& singular_values() const { return singular_values_; }
  VectorXd eigenvalues() const { return singular_values_.array().square(); }
  const MatrixXd& coefficients() const { return coefficients_; }

  int state_dim() const { return static_cast<int>(mean_.size()); }
  int ensemble_size() const { return static_cast<int>(coefficients_.rows()); }
  /// e = min(m, n)
  int full_rank() const { return static_cast<int>(singular_values_.size()); }
  /// Number of singular values above the zero threshold.
  int numerical_rank() const;
  int retained() const { return retained_; }

  PodBlock retained_block() const;
  PodBlock complement_block() const;

  /// Same decomposition with a different retained rank.
  PodBasis with_retained(int d) const;

 private:
  VectorXd mean_;
  MatrixXd modes_;
  VectorXd singular_values_;
  MatrixXd coefficients_;
  int retained_ = 0;
};

/// Full decomposition of a snapshot ensemble (retained = e).
PodBasis fit_pod(const MatrixXd& snapshots);
PodBasis fit_pod(const SnapshotMatrix& snapshots);

/// Explained variance rate of the first d modes.
double evr(const PodBasis& basis, int d);

struct KeepModes {
  int d;
};
struct EvrThreshold {
  double tau;
};
using TruncationCriterion = std::variant<KeepModes, EvrThreshold>;

/// Rank selected by a criterion (smallest d with evr >= tau for thresholds).
int select_rank(const PodBasis& basis, const TruncationCriterion& criterion);

/// Copy of the basis truncated per criterion; retained/complement blocks are
/// available through retained_block() and complement_block().
PodBasis truncate(const PodBasis& basis, const TruncationCriterion& criterion);

/// Reduced coordinates nu = Sigma_d^-1 Phi_d^T (y - mean).
VectorXd project(const PodBasis& basis, const VectorXd& y);

/// State mean + Phi_d Sigma_d nu.
VectorXd reconstruct(const PodBasis& basis, const VectorXd& nu);

}  // namespace surroda::pod
