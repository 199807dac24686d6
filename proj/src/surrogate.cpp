/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace surroda::surrogate {

Standardizer Standardizer::fit(const MatrixXd& ensemble) {
  if (ensemble.cols() < 2) throw ValidationError("standardization needs at least 2 members");
  require_finite(ensemble, "standardization ensemble");
  Standardizer s;
  s.mean = ensemble.rowwise().mean();
  s.scale.resize(ensemble.rows());
  const double denom = static_cast<double>(ensemble.cols() - 1);
  for (Eigen::Index i = 0; i < ensemble.rows(); ++i) {
    const double sd = std::sqrt((ensemble.row(i).array() - s.mean(i)).square().sum() / denom);
    if (sd <= 1e-12 * std::max(1.0, std::abs(s.mean(i)))) {
      s.scale(i) = 1.0;
      s.constant_components.push_back(static_cast<int>(i));
    } else {
      s.scale(i) = sd;
    }
  }
  return s;
}

Standardizer Standardizer::identity(int dim) {
  return {VectorXd::Zero(dim), VectorXd::Ones(dim), {}};
}

VectorXd Standardizer::apply(const VectorXd& v) const {
  if (v.size() != mean.size()) throw ValidationError("standardizer dimension mismatch");
  return (v - mean).cwiseQuotient(scale);
}

MatrixXd Standardizer::apply_columns(const MatrixXd& m) const {
  if (m.rows() != mean.size()) throw ValidationError("standardizer dimension mismatch");
  return (m.colwise() - mean).array().colwise() / scale.array();
}

VectorXd Standardizer::invert(const VectorXd& z) const {
  if (z.size() != mean.size()) throw ValidationError("standardizer dimension mismatch");
  return mean + z.cwiseProduct(scale);
}

MatrixXd Standardizer::apply_covariance(const MatrixXd& c) const {
  if (c.rows() != mean.size() || c.cols() != mean.size()) {
    throw ValidationError("covariance size does not match the standardizer");
  }
  const VectorXd inv = scale.cwiseInverse();
  return inv.asDiagonal() * c * inv.asDiagonal();
}

// ---------------------------------------------------------------------------

MatrixXd PodEnSurrogate::phi_x() const { return joint.modes().topLeftCorner(param_dim, rank()); }
MatrixXd PodEnSurrogate::phi_y() const { return joint.modes().bottomLeftCorner(state_dim(), rank()); }
VectorXd PodEnSurrogate::sigma() const { return joint.singular_values().head(rank()); }

VectorXd PodEnSurrogate::offset_x() const { return x_standardizer.invert(joint.mean().head(param_dim)); }
VectorXd PodEnSurrogate::offset_y() const { return y_standardizer.invert(joint.mean().tail(state_dim())); }

MatrixXd PodEnSurrogate::map_x() const {
  return x_standardizer.scale.asDiagonal() * phi_x() * sigma().asDiagonal();
}

MatrixXd PodEnSurrogate::map_y() const {
  return y_standardizer.scale.asDiagonal() * phi_y() * sigma().asDiagonal();
}

PodEnSurrogate build_poden(const MatrixXd& params, const MatrixXd& states,
                           const pod::TruncationCriterion& criterion) {
  if (params.cols() != states.cols()) {
    throw ValidationError("parameter and state ensembles have different member counts");
  }
  if (params.cols() < 2) throw ValidationError("PODEn surrogate needs at least 2 members");
  PodEnSurrogate s;
  s.param_dim = static_cast<int>(params.rows());
  s.x_standardizer = Standardizer::fit(params);
  s.y_standardizer = Standardizer::fit(states);
  MatrixXd stacked(params.rows() + states.rows(), params.cols());
  stacked << s.x_standardizer.apply_columns(params), s.y_standardizer.apply_columns(states);
  s.joint = pod::truncate(pod::fit_pod(stacked), criterion);
  return s;
}

PodEnPrediction poden_predict_standardized(const PodEnSurrogate& s, const VectorXd& nu) {
  if (nu.size() != s.rank()) {
    throw ValidationError("reduced vector has " + std::to_string(nu.size()) + " entries, expected " +
                          std::to_string(s.rank()));
  }
  const VectorXd full = pod::reconstruct(s.joint, nu);
  return {full.head(s.param_dim), full.tail(s.state_dim())};
}

PodEnPrediction poden_predict(const PodEnSurrogate& s, const VectorXd& nu) {
  auto z = poden_predict_standardized(s, nu);
  return {s.x_standardizer.invert(z.x), s.y_standardizer.invert(z.y)};
}

// ---------------------------------------------------------------------------

PodPceSurrogate PodPceSurrogate::with_modes(int d) const {
  if (d < 1 || d > pce.output_dim()) {
    throw ValidationError("surrogate has " + std::to_string(pce.output_dim()) + " fitted modes, " +
                          std::to_string(d) + " requested");
  }
  PodPceSurrogate out = *this;
  out.state_basis = state_basis.with_retained(d);
  std::vector<int> degrees(pce.mode_degrees().begin(), pce.mode_degrees().begin() + d);
  const int p = *std::max_element(degrees.begin(), degrees.end());
  const int terms = pce::term_count(pce.input_dim(), p);
  out.pce = pce::PceModel(pce.marginals(), p, pce.coefficients().topLeftCorner(d, terms), std::move(degrees),
                          pce.empirical_errors().head(d), pce.validation_bias().head(d));
  return out;
}

PodPceSurrogate build_podpce(const MatrixXd& params, const MatrixXd& states,
                             const pod::TruncationCriterion& criterion, const std::vector<Interval>& bounds,
                             const PodPceConfig& config, std::uint64_t split_seed) {
  const auto n = params.cols();
  if (states.cols() != n) throw ValidationError("parameter and state ensembles have different member counts");
  if (static_cast<Eigen::Index>(bounds.size()) != params.rows()) {
    throw ValidationError("one bound interval per parameter is required");
  }
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw ValidationError("training fraction must lie in (0, 1)");
  }
  const int n_train = static_cast<int>(std::lround(config.train_fraction * static_cast<double>(n)));
  if (n_train < 2 || n_train >= n) {
    throw ValidationError("ensemble of " + std::to_string(n) + " members is too small for a train/validation split");
  }

  PodPceSurrogate s;
  s.bounds = bounds;
  s.ensemble_size = static_cast<int>(n);
  s.state_basis = pod::truncate(pod::fit_pod(states), criterion);
  const int d = s.state_basis.retained();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(split_seed, "split");
  rng.shuffle(order);
  s.train_members.assign(order.begin(), order.begin() + n_train);
  s.validation_members.assign(order.begin() + n_train, order.end());
  std::sort(s.train_members.begin(), s.train_members.end());
  std::sort(s.validation_members.begin(), s.validation_members.end());

  std::vector<pce::InputMarginal> marginals;
  for (const auto& b : bounds) marginals.push_back({pce::Family::Legendre, b.lower, b.upper});

  const MatrixXd targets = s.state_basis.coefficients().leftCols(d);
  auto gather = [&](const std::vector<int>& members, MatrixXd& x, MatrixXd& y) {
    x.resize(static_cast<Eigen::Index>(members.size()), params.rows());
    y.resize(static_cast<Eigen::Index>(members.size()), d);
    for (std::size_t j = 0; j < members.size(); ++j) {
      x.row(static_cast<Eigen::Index>(j)) = params.col(members[j]).transpose();
      y.row(static_cast<Eigen::Index>(j)) = targets.row(members[j]);
    }
  };
  MatrixXd xt, yt, xv, yv;
  gather(s.train_members, xt, yt);
  gather(s.validation_members, xv, yv);
  s.pce = pce::select_degree(xt, yt, xv, yv, marginals, config.degree);
  return s;
}

VectorXd podpce_predict(const PodPceSurrogate& s, const VectorXd& x) {
  return pod::reconstruct(s.state_basis, s.pce.evaluate(x));
}

MatrixXd podpce_jacobian(const PodPceSurrogate& s, const VectorXd& x) {
  const auto block = s.state_basis.retained_block();
  return block.modes * block.singular_values.asDiagonal() * s.pce.jacobian(x);
}

// ---------------------------------------------------------------------------

std::string to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::R: return "R";
    case CovarianceKind::RTilde: return "R_tilde";
    case CovarianceKind::RTildeCorrected: return "R_tilde_corrected";
  }
  return "?";
}

CovarianceKind covariance_kind_from_string(const std::string& name) {
  if (name == "R") return CovarianceKind::R;
  if (name == "R_tilde") return CovarianceKind::RTilde;
  if (name == "R_tilde_corrected") return CovarianceKind::RTildeCorrected;
  throw ValidationError("unknown covariance kind '" + name + "' (expected R, R_tilde or R_tilde_corrected)");
}

namespace {

MatrixXd gram_term(const MatrixXd& factor) {
  MatrixXd g = factor * factor.transpose();
  return 0.5 * (g + g.transpose());
}

}  // namespace

ErrorCovariance assemble_error_covariance(const pod::PodBasis& basis, int ensemble_size,
                                          const VectorXd& pce_variance, const MatrixXd& R) {
  const int m = basis.state_dim();
  if (R.rows() != m || R.cols() != m) {
    throw ValidationError("observation covariance is " + std::to_string(R.rows()) + "x" +
                          std::to_string(R.cols()) + ", expected " + std::to_string(m) + "x" + std::to_string(m));
  }
  if (ensemble_size < 2) throw ValidationError("ensemble size must be at least 2");
  const int d = basis.retained();
  if (pce_variance.size() != d) throw ValidationError("one expansion variance per retained mode is required");
  if ((pce_variance.array() < 0.0).any() || !pce_variance.allFinite()) {
    throw ValidationError("expansion variances must be finite and nonnegative");
  }
  const auto kept = basis.retained_block();
  const auto rest = basis.complement_block();

  ErrorCovariance out;
  out.kind = CovarianceKind::RTilde;
  out.pod_term = gram_term(rest.modes * (rest.singular_values / std::sqrt(ensemble_size - 1.0)).asDiagonal());
  out.pce_term = gram_term(
      kept.modes * kept.singular_values.cwiseProduct(pce_variance.cwiseSqrt()).asDiagonal());
  out.matrix = R + out.pod_term + out.pce_term;
  return out;
}

ErrorCovariance metamodel_error_covariance(const PodPceSurrogate& s, const MatrixXd& R) {
  return assemble_error_covariance(s.state_basis, s.ensemble_size, s.pce.empirical_errors(), R);
}

ErrorCovariance corrected_error_covariance(const PodPceSurrogate& s, const MatrixXd& R,
                                           const VectorXd& validation_bias) {
  const VectorXd& delta = s.pce.empirical_errors();
  if (validation_bias.size() != delta.size()) {
    throw ValidationError("bias vector has " + std::to_string(validation_bias.size()) + " entries, expected " +
                          std::to_string(delta.size()));
  }
  VectorXd variance(delta.size());
  std::vector<int> floored;
  for (Eigen::Index k = 0; k < delta.size(); ++k) {
    const double v = delta(k) - validation_bias(k) * validation_bias(k);
    if (v < 0.0) {
      if (v < -1e-12 * std::max(delta(k), 1e-300)) floored.push_back(static_cast<int>(k));
      variance(k) = 0.0;
    } else {
      variance(k) = v;
    }
  }
  auto out = assemble_error_covariance(s.state_basis, s.ensemble_size, variance, R);
  out.kind = CovarianceKind::RTildeCorrected;
  out.floored_modes = std::move(floored);
  return out;
}

ErrorCovariance poden_error_covariance(const PodEnSurrogate& s, const MatrixXd& R) {
  const int m = s.state_dim();
  if (R.rows() != m || R.cols() != m) throw ValidationError("observation covariance size does not match the surrogate");
  const auto rest = s.joint.complement_block();
  const MatrixXd phi_y = rest.modes.bottomRows(m);
  ErrorCovariance out;
  out.kind = CovarianceKind::RTilde;
  const int n = s.joint.ensemble_size();
  out.pod_term = gram_term(s.y_standardizer.scale.asDiagonal() * phi_y *
                           (rest.singular_values / std::sqrt(n - 1.0)).asDiagonal());
  out.pce_term = MatrixXd::Zero(m, m);
  out.matrix = R + out.pod_term;
  return out;
}

}  // namespace surroda::surrogate
