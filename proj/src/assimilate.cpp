/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/assimilate.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace surroda::assimilate {

namespace {

std::string format_vector(const VectorXd& v) {
  std::ostringstream out;
  out.precision(10);
  out << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v(i);
  out << "]";
  return out.str();
}

bool within(const Interval& b, double x) {
  if (!std::isfinite(b.width())) return x >= b.lower && x <= b.upper;
  return b.contains(x, 1e-9);
}

VectorXd clamp_to(const std::vector<Interval>& bounds, const VectorXd& x) {
  VectorXd out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = std::clamp(x(i), bounds[i].lower, bounds[i].upper);
  return out;
}

}  // namespace

void AssimilationProblem::validate() const {
  const auto m = x_b.size();
  const auto k = y_o.size();
  if (m < 1) throw ValidationError("background vector is empty");
  if (k < 1) throw ValidationError("observation vector is empty");
  if (B.rows() != m || B.cols() != m) throw ValidationError("background covariance size does not match x_b");
  if (R.rows() != k || R.cols() != k) throw ValidationError("observation covariance size does not match y_o");
  if (static_cast<Eigen::Index>(bounds.size()) != m) throw ValidationError("one bound interval per parameter is required");
  if (!(alpha_B > 0.0) || !(alpha_R > 0.0) || !std::isfinite(alpha_B) || !std::isfinite(alpha_R)) {
    throw ValidationError("covariance scale factors must be positive");
  }
  require_finite(x_b, "background vector");
  require_finite(y_o, "observation vector");
  require_finite(B, "background covariance");
  require_finite(R, "observation covariance");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(bounds[i].lower < bounds[i].upper)) throw ValidationError("parameter bounds must satisfy min < max");
    if (!within(bounds[i], x_b(i))) {
      throw ValidationError("background parameter " + std::to_string(i) + " = " + std::to_string(x_b(i)) +
                            " lies outside its bounds");
    }
  }
}

AssimilationProblem scale_covariances(const AssimilationProblem& prob, double alpha_B, double alpha_R) {
  if (!(alpha_B > 0.0) || !(alpha_R > 0.0) || !std::isfinite(alpha_B) || !std::isfinite(alpha_R)) {
    throw ValidationError("covariance scale factors must be positive");
  }
  AssimilationProblem out = prob;
  out.B *= alpha_B;
  out.R *= alpha_R;
  return out;
}

SpdFactor::SpdFactor(const MatrixXd& c, double alpha, const std::string& what) {
  const double big = std::max(c.cwiseAbs().maxCoeff(), 1e-300);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-10 * big) throw ValidationError(what + " must be symmetric");
  llt_.compute(alpha * c);
  if (llt_.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << what << " must be positive definite (smallest eigenvalue " << min_eigenvalue(alpha * c) << ")";
    throw ValidationError(msg.str());
  }
}

double SpdFactor::quadratic(const VectorXd& v) const { return whiten(v).squaredNorm(); }
VectorXd SpdFactor::solve(const VectorXd& v) const { return llt_.solve(v); }
MatrixXd SpdFactor::solve(const MatrixXd& m) const { return llt_.solve(m); }
VectorXd SpdFactor::whiten(const VectorXd& v) const { return llt_.matrixL().solve(v); }
MatrixXd SpdFactor::whiten(const MatrixXd& m) const { return llt_.matrixL().solve(m); }

namespace {

struct Factors {
  SpdFactor b;
  SpdFactor r;

  explicit Factors(const AssimilationProblem& prob)
      : b(prob.B, prob.alpha_B, "background covariance"), r(prob.R, prob.alpha_R, "observation covariance") {}
};

}  // namespace

double cost_3dvar(const VectorXd& x, const StateFunction& model, const AssimilationProblem& prob) {
  prob.validate();
  if (x.size() != prob.param_dim()) throw ValidationError("parameter vector size does not match the problem");
  const Factors f(prob);
  const VectorXd y = model(x);
  if (y.size() != prob.obs_dim()) throw ValidationError("model output size does not match the observations");
  return 0.5 * f.b.quadratic(x - prob.x_b) + 0.5 * f.r.quadratic(y - prob.y_o);
}

// ---------------------------------------------------------------------------

OptimizeResult bounded_quasi_newton(const Objective& objective, const VectorXd& x0,
                                    const std::vector<Interval>& bounds, const OptimizerConfig& config) {
  const auto n = x0.size();
  if (static_cast<Eigen::Index>(bounds.size()) != n) throw ValidationError("one bound interval per variable is required");
  if (!(config.tol > 0.0)) throw ValidationError("optimizer tolerance must be positive");
  if (config.max_iter < 1 || config.memory < 1) throw ValidationError("optimizer iteration and memory limits must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(bounds[i].lower < bounds[i].upper)) throw ValidationError("optimizer bounds must satisfy min < max");
    if (!std::isfinite(x0(i)) || !within(bounds[i], x0(i))) {
      throw ValidationError("starting point component " + std::to_string(i) + " lies outside its bounds");
    }
  }

  OptimizeResult res;
  VectorXd x = clamp_to(bounds, x0);
  VectorXd g(n);
  double f = objective(x, &g);
  ++res.evaluations;
  if (!std::isfinite(f) || !g.allFinite()) throw ValidationError("objective or gradient is not finite at the starting point");

  auto projected_gradient = [&](const VectorXd& at, const VectorXd& grad) {
    return (clamp_to(bounds, at - grad) - at).cwiseAbs().maxCoeff();
  };
  res.trace.push_back({f, projected_gradient(x, g)});

  std::deque<std::pair<VectorXd, VectorXd>> memory;
  bool finished = false;
  for (int it = 0; it < config.max_iter && !finished; ++it) {
    if (res.trace.back().projected_gradient <= config.tol) {
      res.converged = true;
      res.reason = "projected gradient below tolerance";
      finished = true;
      break;
    }
    // Variables pinned at a bound with the gradient pushing outward stay fixed.
    VectorXd mask(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pinned = (x(i) <= bounds[i].lower && g(i) > 0.0) || (x(i) >= bounds[i].upper && g(i) < 0.0);
      mask(i) = pinned ? 0.0 : 1.0;
    }
    const VectorXd g_free = g.cwiseProduct(mask);

    // Two-loop recursion restricted to the free variables.
    VectorXd q = g_free;
    std::vector<double> alphas(memory.size(), 0.0), rhos(memory.size(), 0.0);
    double gamma = 1.0;
    bool have_pair = false;
    for (std::size_t j = memory.size(); j-- > 0;) {
      const VectorXd s = memory[j].first.cwiseProduct(mask);
      const VectorXd y = memory[j].second.cwiseProduct(mask);
      const double sy = s.dot(y);
      if (!(sy > 1e-10 * s.norm() * y.norm())) continue;
      rhos[j] = 1.0 / sy;
      alphas[j] = rhos[j] * s.dot(q);
      q -= alphas[j] * y;
      if (!have_pair) {
        gamma = sy / y.squaredNorm();
        have_pair = true;
      }
    }
    VectorXd d = gamma * q;
    for (std::size_t j = 0; j < memory.size(); ++j) {
      if (rhos[j] == 0.0) continue;
      const VectorXd s = memory[j].first.cwiseProduct(mask);
      const VectorXd y = memory[j].second.cwiseProduct(mask);
      d += (alphas[j] - rhos[j] * y.dot(d)) * s;
    }
    d = -d.cwiseProduct(mask);
    const bool steepest = !have_pair || !d.allFinite() || !(g_free.dot(d) < -1e-14 * g_free.norm() * d.norm());
    if (steepest) d = -g_free;

    double t = steepest ? std::min(1.0, 1.0 / std::max(d.cwiseAbs().maxCoeff(), 1e-300)) : 1.0;
    VectorXd x_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = clamp_to(bounds, x + t * d);
      const VectorXd step = x_new - x;
      if (step.cwiseAbs().maxCoeff() == 0.0) break;
      f_new = objective(x_new, nullptr);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(step)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!steepest) {
        memory.clear();
        continue;
      }
      res.converged = false;
      res.reason = "line search failed to decrease the cost";
      finished = true;
      break;
    }
    VectorXd g_new(n);
    f_new = objective(x_new, &g_new);
    ++res.evaluations;
    if (!g_new.allFinite()) {
      res.converged = false;
      res.reason = "gradient is not finite";
      finished = true;
      break;
    }
    const VectorXd s_vec = x_new - x;
    const VectorXd y_vec = g_new - g;
    if (s_vec.dot(y_vec) > 1e-10 * s_vec.norm() * y_vec.norm()) {
      memory.emplace_back(s_vec, y_vec);
      if (static_cast<int>(memory.size()) > config.memory) memory.pop_front();
    }
    const double rel = (f - f_new) / std::max(std::abs(f), 1.0);
    x = x_new;
    f = f_new;
    g = g_new;
    ++res.iterations;
    res.trace.push_back({f, projected_gradient(x, g)});
    if (config.rel_decrease > 0.0 && rel <= config.rel_decrease) {
      res.converged = true;
      res.reason = "relative cost decrease below threshold";
      finished = true;
    }
  }
  if (!finished) {
    res.converged = res.trace.back().projected_gradient <= config.tol;
    res.reason = res.converged ? "projected gradient below tolerance" : "maximum iterations reached";
  }
  res.x = x;
  res.f = f;
  return res;
}

// ---------------------------------------------------------------------------
// Linear surrogate

namespace {

void check_poden_dims(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob) {
  if (s.param_dim != prob.param_dim() || s.state_dim() != prob.obs_dim()) {
    throw ValidationError("surrogate dimensions (" + std::to_string(s.param_dim) + " parameters, " +
                          std::to_string(s.state_dim()) + " states) do not match the problem");
  }
}

double poden_cost_factored(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob, const Factors& f,
                           const VectorXd& nu, VectorXd* grad) {
  const auto pred = surrogate::poden_predict(s, nu);
  const VectorXd dx = pred.x - prob.x_b;
  const VectorXd dy = pred.y - prob.y_o;
  if (grad) *grad = s.map_x().transpose() * f.b.solve(dx) + s.map_y().transpose() * f.r.solve(dy);
  return 0.5 * f.b.quadratic(dx) + 0.5 * f.r.quadratic(dy);
}

}  // namespace

double poden_cost(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob, const VectorXd& nu,
                  VectorXd* grad) {
  prob.validate();
  check_poden_dims(s, prob);
  if (nu.size() != s.rank()) throw ValidationError("reduced vector size does not match the surrogate rank");
  const Factors f(prob);
  return poden_cost_factored(s, prob, f, nu, grad);
}

AnalysisResult solve_poden3dvar(const surrogate::PodEnSurrogate& s, const AssimilationProblem& prob) {
  prob.validate();
  check_poden_dims(s, prob);
  const Factors f(prob);
  const MatrixXd wx = f.b.whiten(s.map_x());
  const MatrixXd wy = f.r.whiten(s.map_y());
  const VectorXd bx = f.b.whiten(VectorXd(prob.x_b - s.offset_x()));
  const VectorXd by = f.r.whiten(VectorXd(prob.y_o - s.offset_y()));

  const MatrixXd normal = wx.transpose() * wx + wy.transpose() * wy;
  Eigen::LLT<MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14) {
    throw NumericalError("PODEn3DVAR normal matrix is singular for d = " + std::to_string(s.rank()) +
                         "; retain fewer modes");
  }
  AnalysisResult res;
  res.nu_a = llt.solve(wx.transpose() * bx + wy.transpose() * by);
  // Background in reduced coordinates: B-weighted minimum-norm fit of x_b.
  res.nu_b = Eigen::CompleteOrthogonalDecomposition<MatrixXd>(wx).solve(bx);
  const auto pred = surrogate::poden_predict(s, res.nu_a);
  res.x_a = clamp_to(prob.bounds, pred.x);
  res.clipped = res.x_a != pred.x;
  res.y_a = pred.y;
  res.cost = poden_cost_factored(s, prob, f, res.nu_a, nullptr);
  res.cost_trace.push_back({res.cost, 0.0});
  res.converged = true;
  res.reason = "closed form";
  return res;
}

// ---------------------------------------------------------------------------
// POD-PCE surrogate

namespace {

void check_podpce(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob) {
  if (s.pce.input_dim() != prob.param_dim() || s.state_basis.state_dim() != prob.obs_dim()) {
    throw ValidationError("surrogate dimensions (" + std::to_string(s.pce.input_dim()) + " parameters, " +
                          std::to_string(s.state_basis.state_dim()) + " states) do not match the problem");
  }
  for (int i = 0; i < prob.param_dim(); ++i) {
    const auto& pb = prob.bounds[i];
    const auto& sb = s.bounds[i];
    const double slack = 1e-9 * sb.width();
    if (pb.lower < sb.lower - slack || pb.upper > sb.upper + slack) {
      throw ValidationError("problem bounds of parameter " + std::to_string(i) +
                            " exceed the surrogate's input support");
    }
  }
}

double podpce_cost_factored(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob, const Factors& f,
                            const VectorXd& x, VectorXd* grad) {
  const auto block = s.state_basis.retained_block();
  const VectorXd nu = s.pce.evaluate(x);
  const VectorXd dx = x - prob.x_b;
  const VectorXd dy = pod::reconstruct(s.state_basis, nu) - prob.y_o;
  if (grad) {
    const VectorXd w = f.r.solve(dy);
    const VectorXd reduced = block.singular_values.cwiseProduct(block.modes.transpose() * w);
    *grad = f.b.solve(dx) + s.pce.jacobian(x).transpose() * reduced;
  }
  return 0.5 * f.b.quadratic(dx) + 0.5 * f.r.quadratic(dy);
}

/// Optimization in z = (x - x_b) / sqrt(diag(B)). The covariance scales are
/// left out so that a uniform rescaling only rescales the cost.
struct ScaledProblem {
  VectorXd scale;
  std::vector<Interval> z_bounds;

  explicit ScaledProblem(const AssimilationProblem& prob) {
    scale = prob.B.diagonal().cwiseSqrt();
    for (int i = 0; i < prob.param_dim(); ++i) {
      if (!(scale(i) > 0.0)) throw ValidationError("background variances must be positive");
      z_bounds.push_back({(prob.bounds[i].lower - prob.x_b(i)) / scale(i),
                          (prob.bounds[i].upper - prob.x_b(i)) / scale(i)});
    }
  }

  VectorXd to_x(const AssimilationProblem& prob, const VectorXd& z) const {
    return clamp_to(prob.bounds, prob.x_b + scale.cwiseProduct(z));
  }
};

/// Minimizes J / J(x_b): multiplying both covariances by one factor then
/// yields the same iterates, and the tolerances are relative to the
/// background misfit. Costs in the returned trace are in original units.
OptimizeResult minimize_normalized(const Objective& objective, const ScaledProblem& sp, const OptimizerConfig& config) {
  const VectorXd z0 = VectorXd::Zero(static_cast<Eigen::Index>(sp.z_bounds.size()));
  const double f0 = objective(z0, nullptr);
  const double unit = std::isfinite(f0) && f0 > 0.0 ? f0 : 1.0;
  const Objective scaled = [&](const VectorXd& z, VectorXd* grad) {
    const double v = objective(z, grad);
    if (grad) *grad /= unit;
    return v / unit;
  };
  auto opt = bounded_quasi_newton(scaled, z0, sp.z_bounds, config);
  opt.f *= unit;
  for (auto& t : opt.trace) {
    t.cost *= unit;
    t.projected_gradient *= unit;
  }
  return opt;
}

AnalysisResult finish(const OptimizeResult& opt, const AssimilationProblem& prob, const ScaledProblem& sp) {
  AnalysisResult res;
  res.x_a = sp.to_x(prob, opt.x);
  res.cost = opt.f;
  res.cost_trace = opt.trace;
  res.iterations = opt.iterations;
  res.converged = opt.converged;
  res.reason = opt.reason;
  return res;
}

}  // namespace

double podpce_cost(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob, const VectorXd& x,
                   VectorXd* grad) {
  prob.validate();
  check_podpce(s, prob);
  const Factors f(prob);
  return podpce_cost_factored(s, prob, f, x, grad);
}

AnalysisResult solve_podpce3dvar(const surrogate::PodPceSurrogate& s, const AssimilationProblem& prob,
                                 const OptimizerConfig& config) {
  prob.validate();
  check_podpce(s, prob);
  const Factors f(prob);
  const ScaledProblem sp(prob);
  int calls = 0;
  const Objective objective = [&](const VectorXd& z, VectorXd* grad) {
    ++calls;
    const VectorXd x = sp.to_x(prob, z);
    VectorXd gx;
    const double value = podpce_cost_factored(s, prob, f, x, grad ? &gx : nullptr);
    if (grad) *grad = gx.cwiseProduct(sp.scale);
    return value;
  };
  const auto opt = minimize_normalized(objective, sp, config);
  auto res = finish(opt, prob, sp);
  res.y_a = surrogate::podpce_predict(s, res.x_a);
  res.evaluations = calls + 1;
  return res;
}

// ---------------------------------------------------------------------------
// Classical 3DVAR

AnalysisResult solve_classical_3dvar(const StateFunction& model, const AssimilationProblem& prob,
                                     const FiniteDifferenceConfig& fd, const OptimizerConfig& config) {
  prob.validate();
  if (!(fd.relative_step > 0.0) || !(fd.relative_step < 0.5)) {
    throw ValidationError("finite-difference step must lie in (0, 0.5) of the bound width");
  }
  for (const auto& b : prob.bounds) {
    if (!std::isfinite(b.width())) throw ValidationError("finite differences need finite parameter bounds");
  }
  const Factors f(prob);
  const ScaledProblem sp(prob);
  int calls = 0;
  auto run = [&](const VectorXd& x) {
    ++calls;
    VectorXd y;
    try {
      y = model(x);
    } catch (const std::exception& e) {
      throw NumericalError("forward model failed at probe " + format_vector(x) + ": " + e.what());
    }
    if (y.size() != prob.obs_dim() || !y.allFinite()) {
      throw NumericalError("forward model returned an invalid state at probe " + format_vector(x));
    }
    return y;
  };
  // The line search and the gradient request usually hit the same point.
  VectorXd cached_x, cached_y;
  auto state_at = [&](const VectorXd& x) {
    if (cached_x.size() == x.size() && cached_x == x) return cached_y;
    cached_y = run(x);
    cached_x = x;
    return cached_y;
  };

  const int m = prob.param_dim();
  const Objective objective = [&](const VectorXd& z, VectorXd* grad) {
    const VectorXd x = sp.to_x(prob, z);
    const VectorXd y = state_at(x);
    const VectorXd dx = x - prob.x_b;
    const VectorXd dy = y - prob.y_o;
    if (grad) {
      MatrixXd jac(prob.obs_dim(), m);
      for (int i = 0; i < m; ++i) {
        const auto& b = prob.bounds[i];
        const double h = fd.relative_step * b.width();
        VectorXd hi = x, lo = x;
        if (x(i) - h >= b.lower && x(i) + h <= b.upper) {
          hi(i) += h;
          lo(i) -= h;
          jac.col(i) = (run(hi) - run(lo)) / (2.0 * h);
        } else if (x(i) + h <= b.upper) {
          hi(i) += h;
          jac.col(i) = (run(hi) - y) / h;
        } else {
          lo(i) -= h;
          jac.col(i) = (y - run(lo)) / h;
        }
      }
      const VectorXd gx = f.b.solve(dx) + jac.transpose() * f.r.solve(dy);
      *grad = gx.cwiseProduct(sp.scale);
    }
    return 0.5 * f.b.quadratic(dx) + 0.5 * f.r.quadratic(dy);
  };
  const auto opt = minimize_normalized(objective, sp, config);
  auto res = finish(opt, prob, sp);
  res.y_a = state_at(res.x_a);
  res.evaluations = calls;
  return res;
}

}  // namespace surroda::assimilate
