/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/pce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace surroda::pce {

std::string to_string(Family family) {
  return family == Family::Legendre ? "legendre-uniform" : "hermite-gaussian";
}

Family family_from_string(const std::string& name) {
  if (name == "legendre-uniform") return Family::Legendre;
  if (name == "hermite-gaussian") return Family::Hermite;
  throw ValidationError("unknown polynomial family '" + name + "'");
}

void univariate_table(Family family, int max_degree, double t, double* values, double* derivatives) {
  if (max_degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  // Classical (unnormalized) polynomials first.
  values[0] = 1.0;
  if (derivatives) derivatives[0] = 0.0;
  if (max_degree >= 1) {
    values[1] = t;
    if (derivatives) derivatives[1] = 1.0;
  }
  for (int k = 1; k < max_degree; ++k) {
    if (family == Family::Legendre) {
      values[k + 1] = ((2 * k + 1) * t * values[k] - k * values[k - 1]) / (k + 1);
      if (derivatives) derivatives[k + 1] = derivatives[k - 1] + (2 * k + 1) * values[k];
    } else {
      values[k + 1] = t * values[k] - k * values[k - 1];
      if (derivatives) derivatives[k + 1] = (k + 1) * values[k];
    }
  }
  double factorial = 1.0;
  for (int k = 0; k <= max_degree; ++k) {
    double norm;
    if (family == Family::Legendre) {
      norm = std::sqrt(2.0 * k + 1.0);
    } else {
      if (k > 0) factorial *= k;
      norm = 1.0 / std::sqrt(factorial);
    }
    values[k] *= norm;
    if (derivatives) derivatives[k] *= norm;
  }
}

double univariate_eval(Family family, int degree, double t) {
  if (degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  std::vector<double> v(degree + 1);
  univariate_table(family, degree, t, v.data(), nullptr);
  return v[degree];
}

double univariate_derivative(Family family, int degree, double t) {
  if (degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  std::vector<double> v(degree + 1), dv(degree + 1);
  univariate_table(family, degree, t, v.data(), dv.data());
  return dv[degree];
}

int MultiIndex::total_degree() const { return std::accumulate(exponents.begin(), exponents.end(), 0); }

namespace {

void compositions(int remaining, std::size_t position, std::vector<int>& current,
                  std::vector<MultiIndex>& out) {
  if (position + 1 == current.size()) {
    current[position] = remaining;
    out.push_back({current});
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[position] = e;
    compositions(remaining - e, position + 1, current, out);
  }
}

}  // namespace

std::vector<MultiIndex> multi_index_set(int input_dim, int max_degree) {
  if (input_dim < 1) throw ValidationError("multi-index set needs at least one input");
  if (max_degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  std::vector<MultiIndex> out;
  out.reserve(term_count(input_dim, max_degree));
  std::vector<int> current(input_dim, 0);
  for (int q = 0; q <= max_degree; ++q) compositions(q, 0, current, out);
  return out;
}

int term_count(int input_dim, int max_degree) {
  // C(m + p, p) computed incrementally, exact in integers for our sizes.
  long long c = 1;
  for (int i = 1; i <= max_degree; ++i) c = c * (input_dim + i) / i;
  return static_cast<int>(c);
}

double InputMarginal::to_standard(double x) const {
  if (family == Family::Legendre) return (2.0 * x - a - b) / (b - a);
  return (x - a) / b;
}

double InputMarginal::slope() const {
  if (family == Family::Legendre) return 2.0 / (b - a);
  return 1.0 / b;
}

bool InputMarginal::admits(double x) const {
  if (!std::isfinite(x)) return false;
  if (family == Family::Hermite) return true;
  const double slack = 1e-9 * (b - a);
  return x >= a - slack && x <= b + slack;
}

namespace {

void check_marginals(const std::vector<InputMarginal>& marginals) {
  for (const auto& m : marginals) {
    const bool ok = m.family == Family::Legendre ? (std::isfinite(m.a) && std::isfinite(m.b) && m.a < m.b)
                                                 : (std::isfinite(m.a) && std::isfinite(m.b) && m.b > 0.0);
    if (!ok) throw ValidationError("invalid input marginal (bounds must be finite with min < max)");
  }
}

// values[i * (p + 1) + beta] for input i and degree beta.
void fill_tables(const std::vector<InputMarginal>& marginals, int p, const double* x,
                 std::vector<double>& values, std::vector<double>* derivatives) {
  const std::size_t m = marginals.size();
  values.resize(m * (p + 1));
  if (derivatives) derivatives->resize(m * (p + 1));
  for (std::size_t i = 0; i < m; ++i) {
    // Clamp tolerated overshoot so Legendre values stay on [-1, 1].
    double t = marginals[i].to_standard(x[i]);
    if (marginals[i].family == Family::Legendre) t = std::clamp(t, -1.0, 1.0);
    univariate_table(marginals[i].family, p, t, values.data() + i * (p + 1),
                     derivatives ? derivatives->data() + i * (p + 1) : nullptr);
  }
}

}  // namespace

MatrixXd design_matrix(const MatrixXd& samples, const std::vector<InputMarginal>& marginals,
                       const std::vector<MultiIndex>& indices) {
  const auto m = static_cast<Eigen::Index>(marginals.size());
  if (samples.cols() != m) {
    throw ValidationError("design matrix: samples have " + std::to_string(samples.cols()) +
                          " inputs, expected " + std::to_string(m));
  }
  check_marginals(marginals);
  int p = 0;
  for (const auto& a : indices) {
    if (static_cast<Eigen::Index>(a.exponents.size()) != m) {
      throw ValidationError("design matrix: multi-index dimension mismatch");
    }
    p = std::max(p, *std::max_element(a.exponents.begin(), a.exponents.end()));
  }
  MatrixXd psi(samples.rows(), static_cast<Eigen::Index>(indices.size()));
  std::vector<double> table;
  std::vector<double> row(m);
  for (Eigen::Index j = 0; j < samples.rows(); ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      row[i] = samples(j, i);
      if (!marginals[i].admits(row[i])) {
        throw ValidationError("design matrix: sample " + std::to_string(j) + " input " +
                              std::to_string(i) + " = " + std::to_string(row[i]) +
                              " lies outside its bounds");
      }
    }
    fill_tables(marginals, p, row.data(), table, nullptr);
    for (std::size_t t = 0; t < indices.size(); ++t) {
      double v = 1.0;
      for (Eigen::Index i = 0; i < m; ++i) v *= table[i * (p + 1) + indices[t].exponents[i]];
      psi(j, static_cast<Eigen::Index>(t)) = v;
    }
  }
  return psi;
}

// ---------------------------------------------------------------------------
// LARS

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Least-squares refit on a column subset with corrected leave-one-out error.
struct Refit {
  const MatrixXd& design;
  const VectorXd& targets;
  const MatrixXd& gram;  // design^T design
  const VectorXd& moment;  // design^T targets

  bool operator()(const std::vector<int>& cols, VectorXd& coef, PathModel& model) const {
    const auto n = design.rows();
    const auto k = static_cast<Eigen::Index>(cols.size());
    if (k >= n) return false;
    MatrixXd g(k, k);
    VectorXd b(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      b(r) = moment(cols[r]);
      for (Eigen::Index c = 0; c < k; ++c) g(r, c) = gram(cols[r], cols[c]);
    }
    Eigen::LLT<MatrixXd> llt(g);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13) return false;
    coef = llt.solve(b);

    MatrixXd z(n, k);
    for (Eigen::Index c = 0; c < k; ++c) z.col(c) = design.col(cols[c]);
    const VectorXd resid = targets - z * coef;
    const MatrixXd w = llt.matrixL().solve(z.transpose());
    const VectorXd h = w.colwise().squaredNorm().transpose();
    const MatrixXd linv = llt.matrixL().solve(MatrixXd::Identity(k, k));

    model.active = cols;
    model.training_mse = resid.squaredNorm() / static_cast<double>(n);
    if ((h.array() >= 1.0 - 1e-10).any()) {
      model.loo_error = kInf;
      return true;
    }
    const double loo = (resid.array() / (1.0 - h.array())).square().mean();
    const double correction = static_cast<double>(n) / static_cast<double>(n - k) * (1.0 + linv.squaredNorm());
    model.loo_error = loo * correction;
    return true;
  }
};

}  // namespace

LarsResult fit_lars(const MatrixXd& design, const VectorXd& targets, const LarsOptions& options) {
  const auto n = design.rows();
  const auto q_all = design.cols();
  if (n < 2) throw ValidationError("LARS needs at least 2 samples");
  if (q_all < 1) throw ValidationError("LARS design matrix has no columns");
  if (targets.size() != n) throw ValidationError("LARS target length does not match the design");
  require_finite(design, "LARS design matrix");
  require_finite(targets, "LARS targets");
  if ((design.col(0).array() - 1.0).abs().maxCoeff() > 1e-12) {
    throw ValidationError("LARS design column 0 must be the constant term");
  }

  const MatrixXd gram_full = design.transpose() * design;
  const VectorXd moment_full = design.transpose() * targets;
  const Refit refit{design, targets, gram_full, moment_full};

  // Standardized non-constant regressors.
  std::vector<int> regressor;  // design column of each standardized column
  const VectorXd means = design.colwise().mean().transpose();
  VectorXd scales(q_all);
  for (Eigen::Index j = 1; j < q_all; ++j) {
    scales(j) = (design.col(j).array() - means(j)).matrix().norm();
    if (scales(j) > 1e-12 * std::sqrt(static_cast<double>(n))) regressor.push_back(static_cast<int>(j));
  }
  const auto q = static_cast<Eigen::Index>(regressor.size());
  MatrixXd x(n, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const int c = regressor[j];
    x.col(j) = (design.col(c).array() - means(c)) / scales(c);
  }
  const VectorXd yc = targets.array() - targets.mean();
  const MatrixXd gram = x.transpose() * x;
  const VectorXd xty = x.transpose() * yc;

  LarsResult result;
  std::vector<VectorXd> path_coefs;
  auto record = [&](const std::vector<int>& active_std) {
    std::vector<int> cols{0};
    for (int j : active_std) cols.push_back(regressor[j]);
    VectorXd coef;
    PathModel model;
    if (!refit(cols, coef, model)) return false;
    VectorXd full = VectorXd::Zero(q_all);
    for (std::size_t i = 0; i < cols.size(); ++i) full(cols[i]) = coef(static_cast<Eigen::Index>(i));
    result.path.push_back(std::move(model));
    path_coefs.push_back(std::move(full));
    return true;
  };
  if (!record({})) throw NumericalError("LARS: intercept-only refit failed");

  const Eigen::Index max_active = std::min<Eigen::Index>(q, n - 2);
  std::vector<int> active;
  std::vector<char> in_active(q, 0), excluded(q, 0);
  VectorXd beta = VectorXd::Zero(q);
  double best_loo = result.path.front().loo_error;
  int since_best = 0;

  const double c0 = q > 0 ? xty.cwiseAbs().maxCoeff() : 0.0;
  const double c_floor = 1e-12 * std::max(c0, 1e-300);

  while (static_cast<Eigen::Index>(active.size()) < max_active && c0 > 1e-300) {
    const VectorXd c = xty - gram * beta;
    double big = 0.0;
    int arg = -1;
    for (Eigen::Index j = 0; j < q; ++j) {
      if (excluded[j]) continue;
      if (std::abs(c(j)) > big) {
        big = std::abs(c(j));
        if (!in_active[j]) arg = static_cast<int>(j);
      }
    }
    if (big <= c_floor) break;
    if (active.empty()) {
      if (arg < 0) break;
      active.push_back(arg);
      in_active[arg] = 1;
      if (!record(active)) {
        active.pop_back();
        in_active[arg] = 0;
        excluded[arg] = 1;
        continue;
      }
    }

    const auto k = static_cast<Eigen::Index>(active.size());
    VectorXd sign(k);
    MatrixXd ga(k, k);
    for (Eigen::Index r = 0; r < k; ++r) {
      sign(r) = c(active[r]) >= 0.0 ? 1.0 : -1.0;
      for (Eigen::Index s = 0; s < k; ++s) ga(r, s) = gram(active[r], active[s]);
    }
    ga = sign.asDiagonal() * ga * sign.asDiagonal();
    Eigen::LLT<MatrixXd> llt(ga);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
      // The most recent addition is collinear with the active set: drop it.
      const int last = active.back();
      active.pop_back();
      in_active[last] = 0;
      excluded[last] = 1;
      if (!result.path.empty() && result.path.size() > 1) {
        result.path.pop_back();
        path_coefs.pop_back();
      }
      continue;
    }
    const VectorXd ginv1 = llt.solve(VectorXd::Ones(k));
    const double a_scale = 1.0 / std::sqrt(ginv1.sum());
    const VectorXd w = a_scale * ginv1;
    const VectorXd sw = sign.cwiseProduct(w);
    VectorXd a = VectorXd::Zero(q);
    for (Eigen::Index r = 0; r < k; ++r) a += gram.col(active[r]) * sw(r);

    double gamma = big / a_scale;
    int next = -1;
    for (Eigen::Index j = 0; j < q; ++j) {
      if (in_active[j] || excluded[j]) continue;
      const double cand1 = (big - c(j)) / (a_scale - a(j));
      const double cand2 = (big + c(j)) / (a_scale + a(j));
      for (double cand : {cand1, cand2}) {
        if (cand > 1e-14 * gamma && cand < gamma) {
          gamma = cand;
          next = static_cast<int>(j);
        }
      }
    }
    for (Eigen::Index r = 0; r < k; ++r) beta(active[r]) += gamma * sw(r);
    if (next < 0) break;

    active.push_back(next);
    in_active[next] = 1;
    if (!record(active)) {
      active.pop_back();
      in_active[next] = 0;
      excluded[next] = 1;
      continue;
    }
    if (result.path.back().loo_error < best_loo) {
      best_loo = result.path.back().loo_error;
      since_best = 0;
    } else if (options.patience > 0 && ++since_best >= options.patience) {
      break;
    }
  }

  int chosen = static_cast<int>(result.path.size()) - 1;
  if (options.loo_selection) {
    double best = kInf;
    for (const auto& m : result.path) best = std::min(best, m.loo_error);
    double variance = (targets.array() - targets.mean()).square().mean();
    const double tol = 1e-10 * variance;
    for (std::size_t i = 0; i < result.path.size(); ++i) {
      if (result.path[i].loo_error <= best + tol) {
        chosen = static_cast<int>(i);
        break;
      }
    }
  }
  result.selected = chosen;
  result.coefficients = path_coefs[chosen];
  result.loo_error = result.path[chosen].loo_error;
  result.active = result.path[chosen].active;
  return result;
}

// ---------------------------------------------------------------------------
// PceModel

PceModel::PceModel(std::vector<InputMarginal> marginals, int max_degree, MatrixXd coefficients,
                   std::vector<int> mode_degrees, VectorXd empirical_errors, VectorXd validation_bias)
    : marginals_(std::move(marginals)),
      max_degree_(max_degree),
      coefficients_(std::move(coefficients)),
      mode_degrees_(std::move(mode_degrees)),
      empirical_errors_(std::move(empirical_errors)),
      validation_bias_(std::move(validation_bias)) {
  check_marginals(marginals_);
  indices_ = multi_index_set(input_dim(), max_degree_);
  if (coefficients_.cols() != static_cast<Eigen::Index>(indices_.size())) {
    throw ValidationError("PCE coefficient matrix has " + std::to_string(coefficients_.cols()) +
                          " columns, expected " + std::to_string(indices_.size()));
  }
  const auto d = coefficients_.rows();
  if (static_cast<Eigen::Index>(mode_degrees_.size()) != d || empirical_errors_.size() != d ||
      validation_bias_.size() != d) {
    throw ValidationError("PCE per-mode metadata length does not match the output dimension");
  }
}

void PceModel::check_input(const VectorXd& x) const {
  if (x.size() != input_dim()) {
    throw ValidationError("PCE input has " + std::to_string(x.size()) + " components, expected " +
                          std::to_string(input_dim()));
  }
  for (int i = 0; i < input_dim(); ++i) {
    if (!marginals_[i].admits(x(i))) {
      throw ValidationError("PCE input " + std::to_string(i) + " = " + std::to_string(x(i)) +
                            " lies outside its bounds");
    }
  }
}

VectorXd PceModel::basis(const VectorXd& x) const {
  check_input(x);
  std::vector<double> table;
  fill_tables(marginals_, max_degree_, x.data(), table, nullptr);
  const int stride = max_degree_ + 1;
  VectorXd zeta(static_cast<Eigen::Index>(indices_.size()));
  for (std::size_t t = 0; t < indices_.size(); ++t) {
    double v = 1.0;
    for (int i = 0; i < input_dim(); ++i) v *= table[i * stride + indices_[t].exponents[i]];
    zeta(static_cast<Eigen::Index>(t)) = v;
  }
  return zeta;
}

VectorXd PceModel::evaluate(const VectorXd& x) const { return coefficients_ * basis(x); }

MatrixXd PceModel::jacobian(const VectorXd& x) const {
  check_input(x);
  std::vector<double> table, dtable;
  fill_tables(marginals_, max_degree_, x.data(), table, &dtable);
  const int stride = max_degree_ + 1;
  const int m = input_dim();
  MatrixXd dzeta(static_cast<Eigen::Index>(indices_.size()), m);
  for (std::size_t t = 0; t < indices_.size(); ++t) {
    const auto& e = indices_[t].exponents;
    for (int i = 0; i < m; ++i) {
      double v = dtable[i * stride + e[i]] * marginals_[i].slope();
      for (int j = 0; j < m && v != 0.0; ++j) {
        if (j != i) v *= table[j * stride + e[j]];
      }
      dzeta(static_cast<Eigen::Index>(t), i) = v;
    }
  }
  return coefficients_ * dzeta;
}

// ---------------------------------------------------------------------------
// Degree selection

PceModel select_degree(const MatrixXd& train_inputs, const MatrixXd& train_targets,
                       const MatrixXd& validation_inputs, const MatrixXd& validation_targets,
                       const std::vector<InputMarginal>& marginals, const DegreeSelectionConfig& config) {
  if (config.max_degree < 0) throw ValidationError("maximum PCE degree must be nonnegative");
  if (validation_inputs.rows() == 0) {
    throw ValidationError("empirical error undefined: validation set is empty");
  }
  if (train_inputs.rows() < 2) throw ValidationError("PCE training set needs at least 2 samples");
  if (train_targets.rows() != train_inputs.rows() || validation_targets.rows() != validation_inputs.rows()) {
    throw ValidationError("PCE inputs and targets have different sample counts");
  }
  if (train_targets.cols() != validation_targets.cols()) {
    throw ValidationError("PCE training and validation targets differ in width");
  }
  const auto d = train_targets.cols();
  const int m = static_cast<int>(marginals.size());

  const auto indices = multi_index_set(m, config.max_degree);
  const MatrixXd psi_train = design_matrix(train_inputs, marginals, indices);
  const MatrixXd psi_val = design_matrix(validation_inputs, marginals, indices);

  std::vector<VectorXd> mode_coefs(d);
  std::vector<int> degrees(d, 0);
  VectorXd errors(d), bias(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const VectorXd y = train_targets.col(k);
    const VectorXd yv = validation_targets.col(k);
    const double scale = yv.squaredNorm() / static_cast<double>(yv.size());
    std::vector<double> delta(config.max_degree + 1);
    std::vector<VectorXd> coefs(config.max_degree + 1);
    for (int p = 0; p <= config.max_degree; ++p) {
      const int terms = term_count(m, p);
      const auto lars = fit_lars(psi_train.leftCols(terms), y, config.lars);
      coefs[p] = lars.coefficients;
      const VectorXd err = yv - psi_val.leftCols(terms) * coefs[p];
      delta[p] = err.squaredNorm() / static_cast<double>(err.size());
    }
    const double best = *std::min_element(delta.begin(), delta.end());
    int chosen = 0;
    while (delta[chosen] > best + 1e-10 * scale) ++chosen;
    degrees[k] = chosen;
    errors(k) = delta[chosen];
    const int terms = term_count(m, chosen);
    bias(k) = (yv - psi_val.leftCols(terms) * coefs[chosen]).mean();
    mode_coefs[k] = coefs[chosen];
  }

  const int p_used = d > 0 ? *std::max_element(degrees.begin(), degrees.end()) : 0;
  MatrixXd c = MatrixXd::Zero(d, term_count(m, p_used));
  for (Eigen::Index k = 0; k < d; ++k) {
    c.row(k).head(mode_coefs[k].size()) = mode_coefs[k].transpose();
  }
  return PceModel(marginals, p_used, std::move(c), std::move(degrees), std::move(errors), std::move(bias));
}

}  // namespace surroda::pce
