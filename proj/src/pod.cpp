/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/pod.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace surroda::pod {

void validate(const SnapshotMatrix& snapshots) {
  if (snapshots.rows() < 1) throw ValidationError("snapshot matrix has no rows");
  if (snapshots.cols() < 2) {
    throw ValidationError("snapshot matrix needs at least 2 members, got " +
                          std::to_string(snapshots.cols()));
  }
  if (!snapshots.row_labels.empty() &&
      static_cast<Eigen::Index>(snapshots.row_labels.size()) != snapshots.rows()) {
    throw ValidationError("snapshot row label count does not match the matrix");
  }
  if (!snapshots.member_ids.empty() &&
      static_cast<Eigen::Index>(snapshots.member_ids.size()) != snapshots.cols()) {
    throw ValidationError("snapshot member id count does not match the matrix");
  }
  require_finite(snapshots.data, "snapshot matrix");
}

PodBasis::PodBasis(VectorXd mean, MatrixXd modes, VectorXd singular_values,
                   MatrixXd coefficients, int retained)
    : mean_(std::move(mean)),
      modes_(std::move(modes)),
      singular_values_(std::move(singular_values)),
      coefficients_(std::move(coefficients)),
      retained_(retained) {
  if (retained_ < 1 || retained_ > full_rank()) {
    throw ValidationError("retained rank " + std::to_string(retained_) + " outside [1, " +
                          std::to_string(full_rank()) + "]");
  }
}

int PodBasis::numerical_rank() const {
  if (singular_values_.size() == 0 || singular_values_(0) <= 0.0) return 0;
  const double cut = kZeroSingularValueRatio * singular_values_(0);
  int r = 0;
  while (r < full_rank() && singular_values_(r) > cut) ++r;
  return r;
}

PodBlock PodBasis::retained_block() const {
  return {modes_.leftCols(retained_), singular_values_.head(retained_),
          coefficients_.leftCols(retained_)};
}

PodBlock PodBasis::complement_block() const {
  const int rest = full_rank() - retained_;
  return {modes_.rightCols(rest), singular_values_.tail(rest), coefficients_.rightCols(rest)};
}

PodBasis PodBasis::with_retained(int d) const {
  return PodBasis(mean_, modes_, singular_values_, coefficients_, d);
}

PodBasis fit_pod(const SnapshotMatrix& snapshots) {
  validate(snapshots);
  return fit_pod(snapshots.data);
}

PodBasis fit_pod(const MatrixXd& snapshots) {
  if (snapshots.cols() < 2) {
    throw ValidationError("snapshot matrix needs at least 2 members, got " +
                          std::to_string(snapshots.cols()));
  }
  if (snapshots.rows() < 1) throw ValidationError("snapshot matrix has no rows");
  require_finite(snapshots, "snapshot matrix");

  const VectorXd mean = snapshots.rowwise().mean();
  const MatrixXd centered = snapshots.colwise() - mean;

  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  MatrixXd modes = svd.matrixU();
  VectorXd sigma = svd.singularValues();
  MatrixXd coeffs = svd.matrixV();
  const int e = static_cast<int>(sigma.size());

  const double cut = sigma(0) > 0.0 ? kZeroSingularValueRatio * sigma(0) : 0.0;
  for (int k = 0; k < e; ++k) {
    if (sigma(k) <= cut) {
      // No variance: coefficients carry no information.
      sigma(k) = 0.0;
      coeffs.col(k).setZero();
    }
    Eigen::Index imax = 0;
    modes.col(k).cwiseAbs().maxCoeff(&imax);
    if (modes(imax, k) < 0.0) {
      modes.col(k) = -modes.col(k);
      coeffs.col(k) = -coeffs.col(k);
    }
  }
  return PodBasis(mean, std::move(modes), std::move(sigma), std::move(coeffs), e);
}

double evr(const PodBasis& basis, int d) {
  if (d < 1 || d > basis.full_rank()) {
    throw ValidationError("evr rank " + std::to_string(d) + " outside [1, " +
                          std::to_string(basis.full_rank()) + "]");
  }
  const VectorXd lambda = basis.eigenvalues();
  const double total = lambda.sum();
  if (!(total > 0.0)) throw NumericalError("explained variance undefined: all-zero spectrum");
  if (d == basis.full_rank()) return 1.0;
  return std::min(1.0, lambda.head(d).sum() / total);
}

int select_rank(const PodBasis& basis, const TruncationCriterion& criterion) {
  if (const auto* keep = std::get_if<KeepModes>(&criterion)) {
    if (keep->d < 1 || keep->d > basis.full_rank()) {
      throw ValidationError("requested " + std::to_string(keep->d) + " modes but basis has " +
                            std::to_string(basis.full_rank()));
    }
    return keep->d;
  }
  const double tau = std::get<EvrThreshold>(criterion).tau;
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw ValidationError("EVR threshold must lie in (0, 1]");
  }
  for (int d = 1; d <= basis.full_rank(); ++d) {
    if (evr(basis, d) >= tau) return d;
  }
  return basis.full_rank();
}

PodBasis truncate(const PodBasis& basis, const TruncationCriterion& criterion) {
  return basis.with_retained(select_rank(basis, criterion));
}

VectorXd project(const PodBasis& basis, const VectorXd& y) {
  if (y.size() != basis.state_dim()) {
    throw ValidationError("projection: state length " + std::to_string(y.size()) +
                          " does not match basis dimension " + std::to_string(basis.state_dim()));
  }
  const int d = basis.retained();
  if (basis.numerical_rank() < d) {
    throw NumericalError("projection: retained block contains a zero singular value (rank " +
                         std::to_string(basis.numerical_rank()) + " < " + std::to_string(d) + ")");
  }
  VectorXd nu = basis.modes().leftCols(d).transpose() * (y - basis.mean());
  return nu.cwiseQuotient(basis.singular_values().head(d));
}

VectorXd reconstruct(const PodBasis& basis, const VectorXd& nu) {
  const int d = basis.retained();
  if (nu.size() != d) {
    throw ValidationError("reconstruction: expected " + std::to_string(d) +
                          " coefficients, got " + std::to_string(nu.size()));
  }
  return basis.mean() +
         basis.modes().leftCols(d) * basis.singular_values().head(d).cwiseProduct(nu);
}

}  // namespace surroda::pod
