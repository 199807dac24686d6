/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

namespace surroda::experiments {

using surrogate::CovarianceKind;
using surrogate::Standardizer;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_level(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", level);
  return buf;
}

void check_same_size(const VectorXd& a, const VectorXd& b, const Standardizer& s) {
  if (a.size() != b.size() || a.size() != s.dim()) {
    throw ValidationError("RMSE inputs differ in length (" + std::to_string(a.size()) + ", " +
                          std::to_string(b.size()) + ", standardizer " + std::to_string(s.dim()) + ")");
  }
}

}  // namespace

VectorXd series_noise_std(const VectorXd& y_t, int series_length, double level, std::vector<int>* floored) {
  if (!(level > 0.0) || !(level < 1.0)) {
    throw ValidationError("noise level " + format_level(level) +
                          " outside (0, 1): observation covariance must be positive definite");
  }
  if (series_length < 1 || y_t.size() % series_length != 0) {
    throw ValidationError("state length is not a multiple of the series length");
  }
  require_finite(y_t, "true state");
  VectorXd sigma(y_t.size());
  const auto series = y_t.size() / series_length;
  for (Eigen::Index s = 0; s < series; ++s) {
    const auto seg = y_t.segment(s * series_length, series_length);
    const double mean = seg.mean();
    const double sd = std::sqrt((seg.array() - mean).square().mean());
    double value = level * sd;
    if (!(sd > 0.0)) {
      value = level * 1e-6 * std::abs(mean) + 1e-12;
      if (floored) floored->push_back(static_cast<int>(s));
    }
    sigma.segment(s * series_length, series_length).setConstant(value);
  }
  return sigma;
}

NoisyObservation inject_noise(const VectorXd& y_t, int series_length, double level, std::uint64_t seed,
                              const std::string& stream) {
  NoisyObservation obs;
  obs.sigma = series_noise_std(y_t, series_length, level, &obs.floored_series);
  Rng rng(seed, stream.empty() ? "noise/" + format_level(level) : stream);
  obs.y_o.resize(y_t.size());
  for (Eigen::Index j = 0; j < y_t.size(); ++j) obs.y_o(j) = y_t(j) + obs.sigma(j) * rng.normal();
  return obs;
}

double rmse_global(const VectorXd& y_ref, const VectorXd& y_hat, const Standardizer& standardizer) {
  check_same_size(y_ref, y_hat, standardizer);
  return std::sqrt((y_hat - y_ref).cwiseQuotient(standardizer.scale).squaredNorm() /
                   static_cast<double>(y_ref.size()));
}

double relative_rmse_global(const VectorXd& y_ref, const VectorXd& y_hat, const Standardizer& standardizer) {
  const double abs_rmse = rmse_global(y_ref, y_hat, standardizer);
  const double ref = std::sqrt(standardizer.apply(y_ref).squaredNorm() / static_cast<double>(y_ref.size()));
  if (!(ref > 0.0)) throw NumericalError("relative RMSE undefined: standardized reference has zero RMS");
  return abs_rmse / ref;
}

std::vector<GroupRmse> rmse_by(const VectorXd& y_ref, const VectorXd& y_hat, const Standardizer& standardizer,
                               const toymodel::ToyGrid& grid, Grouping grouping) {
  check_same_size(y_ref, y_hat, standardizer);
  if (y_ref.size() != grid.state_dim()) throw ValidationError("state length does not match the toy grid layout");
  std::map<std::pair<int, int>, std::pair<double, int>> acc;
  for (int j = 0; j < grid.state_dim(); ++j) {
    const auto loc = toymodel::locate(grid, j);
    const int v = static_cast<int>(loc.variable);
    std::pair<int, int> key;
    switch (grouping) {
      case Grouping::Variable: key = {v, -1}; break;
      case Grouping::Station: key = {-1, loc.station}; break;
      case Grouping::VariableStation: key = {v, loc.station}; break;
    }
    const double e = (y_hat(j) - y_ref(j)) / standardizer.scale(j);
    acc[key].first += e * e;
    acc[key].second += 1;
  }
  std::vector<GroupRmse> out;
  for (const auto& [key, sum] : acc) {
    std::string label;
    if (key.first >= 0) label = toymodel::variable_name(static_cast<toymodel::Variable>(key.first));
    if (key.second >= 0) label += (label.empty() ? "" : "/") + grid.stations[key.second].id;
    out.push_back({label, std::sqrt(sum.first / sum.second), sum.second});
  }
  return out;
}

std::string to_string(SurrogateKind kind) { return kind == SurrogateKind::PodPce ? "podpce" : "poden"; }

SurrogateKind surrogate_kind_from_string(const std::string& name) {
  if (name == "podpce") return SurrogateKind::PodPce;
  if (name == "poden") return SurrogateKind::PodEn;
  throw ValidationError("unknown surrogate kind '" + name + "' (expected podpce or poden)");
}

std::vector<std::pair<double, double>> default_alpha_grid() {
  const double values[] = {0.01, 0.1, 1.0, 10.0, 100.0};
  std::vector<std::pair<double, double>> grid;
  for (double b : values) {
    for (double r : values) grid.emplace_back(b, r);
  }
  return grid;
}

void TwinConfig::validate() const {
  grid.validate();
  if (noise_levels.empty()) throw ValidationError("at least one noise level is required");
  for (double level : noise_levels) {
    if (!(level > 0.0) || !(level < 1.0)) {
      throw ValidationError("noise level " + format_level(level) +
                            " outside (0, 1): observation covariance must be positive definite");
    }
  }
  if (training_sizes.empty()) throw ValidationError("at least one training size is required");
  for (std::size_t i = 0; i < training_sizes.size(); ++i) {
    if (training_sizes[i] < 8) throw ValidationError("training sizes must be at least 8");
    if (i > 0 && training_sizes[i] <= training_sizes[i - 1]) {
      throw ValidationError("training sizes must be strictly increasing");
    }
  }
  if (mode_numbers.empty() && !include_evr) throw ValidationError("no retained ranks configured");
  for (int d : mode_numbers) {
    if (d < 1) throw ValidationError("mode numbers must be positive");
  }
  if (include_evr && !(evr_threshold > 0.0 && evr_threshold <= 1.0)) {
    throw ValidationError("EVR threshold must lie in (0, 1]");
  }
  if (surrogates.empty() || covariances.empty() || alphas.empty()) {
    throw ValidationError("surrogate, covariance and alpha lists must be non-empty");
  }
  for (const auto& [b, r] : alphas) {
    if (!(b > 0.0) || !(r > 0.0)) throw ValidationError("covariance scale factors must be positive");
  }
  if (x_true) {
    if (x_true->size() != toymodel::kParamCount) throw ValidationError("true parameter vector must have 4 entries");
    const auto bounds = toymodel::parameter_bounds();
    for (int i = 0; i < toymodel::kParamCount; ++i) {
      if (!bounds[i].contains((*x_true)(i))) throw ValidationError("true parameters must lie within the bounds");
    }
  }
  if (workers < 1) throw ValidationError("worker count must be at least 1");
}

void MeasurementConfig::validate() const {
  grid.validate();
  if (!(obs_error_level > 0.0) || !(obs_error_level < 1.0)) {
    throw ValidationError("observation error level outside (0, 1): observation covariance must be positive definite");
  }
  if (training_sizes.empty()) throw ValidationError("at least one training size is required");
  for (std::size_t i = 0; i < training_sizes.size(); ++i) {
    if (training_sizes[i] < 8) throw ValidationError("training sizes must be at least 8");
    if (i > 0 && training_sizes[i] <= training_sizes[i - 1]) {
      throw ValidationError("training sizes must be strictly increasing");
    }
  }
  if (mode_numbers.empty() && !include_evr) throw ValidationError("no retained ranks configured");
  if (observations && observations->size() != grid.state_dim()) {
    throw ValidationError("observation vector has " + std::to_string(observations->size()) +
                          " components, the state layout needs " + std::to_string(grid.state_dim()));
  }
  if (hidden_params && hidden_params->size() != toymodel::kParamCount) {
    throw ValidationError("hidden parameter vector must have 4 entries");
  }
  if (workers < 1) throw ValidationError("worker count must be at least 1");
}

// ---------------------------------------------------------------------------

namespace {

struct Rank {
  int d = 0;
  bool from_evr = false;
};

/// Surrogates and standardization for one training ensemble.
struct TrainingSet {
  int n = 0;
  Standardizer standardizer;
  MatrixXd params;  ///< 4 x n
  MatrixXd z;       ///< standardized states, m_y x n
  std::optional<surrogate::PodPceSurrogate> podpce;  ///< fitted up to the largest rank
  std::optional<surrogate::PodEnSurrogate> poden;    ///< full rank
  std::vector<Rank> podpce_ranks;
  std::vector<Rank> poden_ranks;
  std::string podpce_error;
  std::string poden_error;
};

std::vector<Rank> rank_list(const std::vector<int>& modes, bool include_evr, double tau, const pod::PodBasis& basis) {
  std::vector<Rank> out;
  for (int d : modes) out.push_back({d, false});
  if (include_evr) out.push_back({pod::select_rank(basis, pod::EvrThreshold{tau}), true});
  return out;
}

TrainingSet prepare(const MatrixXd& params_rows, const MatrixXd& states, int n, const std::vector<int>& modes,
                    bool include_evr, double tau, bool want_podpce, bool want_poden,
                    const surrogate::PodPceConfig& pce_config, std::uint64_t split_seed) {
  TrainingSet ts;
  ts.n = n;
  ts.params = params_rows.topRows(n).transpose();
  const MatrixXd y = states.leftCols(n);
  ts.standardizer = Standardizer::fit(y);
  ts.z = ts.standardizer.apply_columns(y);
  const auto bounds = toymodel::parameter_bounds();
  if (want_podpce) {
    try {
      const auto full = pod::fit_pod(ts.z);
      ts.podpce_ranks = rank_list(modes, include_evr, tau, full);
      int d_max = 1;
      for (const auto& r : ts.podpce_ranks) d_max = std::max(d_max, r.d);
      d_max = std::min(d_max, full.full_rank());
      ts.podpce = surrogate::build_podpce(ts.params, ts.z, pod::KeepModes{d_max}, bounds, pce_config, split_seed);
    } catch (const std::exception& e) {
      ts.podpce_error = e.what();
    }
  }
  if (want_poden) {
    try {
      ts.poden = surrogate::build_poden(ts.params, ts.z, pod::KeepModes{std::min<int>(n, 4 + ts.z.rows())});
      ts.poden_ranks = rank_list(modes, include_evr, tau, ts.poden->joint);
    } catch (const std::exception& e) {
      ts.poden_error = e.what();
    }
  }
  return ts;
}

MatrixXd background_covariance(BackgroundKind kind, const VectorXd& x_b, const VectorXd* x_t) {
  VectorXd var = toymodel::table_stds().array().square();
  if (kind == BackgroundKind::FromTruth) {
    if (!x_t) throw ValidationError("background from truth needs the true parameters");
    const auto bounds = toymodel::parameter_bounds();
    for (int i = 0; i < toymodel::kParamCount; ++i) {
      const double floor = 1e-6 * bounds[i].width();
      var(i) = std::max((x_b(i) - (*x_t)(i)) * (x_b(i) - (*x_t)(i)), floor * floor);
    }
  }
  return MatrixXd(var.asDiagonal());
}

struct Reference {
  const VectorXd* truth = nullptr;  ///< physical true state, may be null
  const VectorXd* obs = nullptr;    ///< physical observation
  const VectorXd* x_true = nullptr;
};

void fill_metrics(ReportRow& row, const VectorXd& x_a, const VectorXd& y_a_physical, const VectorXd& y_b_model,
                  const Standardizer& st, const Reference& ref, const toymodel::ToyGrid& grid) {
  const VectorXd y_model = toymodel::simulate(x_a, grid);
  const VectorXd& target = ref.truth ? *ref.truth : *ref.obs;
  row.x_a = x_a;
  row.rmse_obs = rmse_global(*ref.obs, y_model, st);
  row.rel_rmse_obs = relative_rmse_global(*ref.obs, y_model, st);
  if (ref.truth) {
    row.rmse_truth = rmse_global(*ref.truth, y_model, st);
    row.rel_rmse_truth = relative_rmse_global(*ref.truth, y_model, st);
  } else {
    row.rmse_truth = kNaN;
    row.rel_rmse_truth = kNaN;
  }
  row.rmse_background = rmse_global(target, y_b_model, st);
  row.rmse_surrogate = rmse_global(target, y_a_physical, st);
  if (ref.x_true) {
    row.param_error = (x_a - *ref.x_true).cwiseQuotient(toymodel::table_stds()).cwiseAbs().maxCoeff();
  } else {
    row.param_error = kNaN;
  }
  row.rmse_by_variable.clear();
  for (const auto& g : rmse_by(target, y_model, st, grid, Grouping::Variable)) row.rmse_by_variable.push_back(g.rmse);
  row.rmse_by_station.clear();
  for (const auto& g : rmse_by(target, y_model, st, grid, Grouping::Station)) row.rmse_by_station.push_back(g.rmse);
}

void mark_failed(ReportRow& row, const std::string& message) {
  row.error = message.empty() ? "unknown failure" : message;
  row.rmse_truth = row.rmse_obs = row.rel_rmse_truth = row.rel_rmse_obs = kNaN;
  row.rmse_background = row.rmse_surrogate = row.param_error = row.cost = kNaN;
  row.converged = false;
}

/// One surrogate-based assimilation cell.
struct CellSpec {
  const TrainingSet* ts = nullptr;
  SurrogateKind kind = SurrogateKind::PodPce;
  Rank rank;
  CovarianceKind covariance = CovarianceKind::R;
  double alpha_B = 1.0;
  double alpha_R = 1.0;
  double noise = 0.0;
  int replicate = -1;
  const VectorXd* y_o = nullptr;    ///< physical
  const MatrixXd* R_phys = nullptr;
  MatrixXd B;
  Reference ref;
  const VectorXd* y_b_model = nullptr;
};

ReportRow run_cell(const CellSpec& c, const std::string& experiment, const assimilate::OptimizerConfig& optimizer,
                   const toymodel::ToyGrid& grid) {
  const auto start = std::chrono::steady_clock::now();
  ReportRow row;
  row.experiment = experiment;
  row.surrogate = to_string(c.kind);
  row.covariance = surrogate::to_string(c.covariance);
  row.d = c.rank.d;
  row.d_from_evr = c.rank.from_evr;
  row.n = c.ts->n;
  row.noise = c.noise;
  row.alpha_B = c.alpha_B;
  row.alpha_R = c.alpha_R;
  row.replicate = c.replicate;
  row.forward_calls = c.ts->n;
  try {
    const Standardizer& st = c.ts->standardizer;
    assimilate::AssimilationProblem prob;
    prob.x_b = toymodel::table_means();
    prob.B = c.B;
    prob.bounds = toymodel::parameter_bounds();
    prob.y_o = st.apply(*c.y_o);
    const MatrixXd r_std = st.apply_covariance(*c.R_phys);
    prob.alpha_B = c.alpha_B;
    prob.alpha_R = c.alpha_R;
    assimilate::AnalysisResult res;
    if (c.kind == SurrogateKind::PodPce) {
      if (!c.ts->podpce) throw NumericalError("POD-PCE surrogate unavailable: " + c.ts->podpce_error);
      const auto s = c.ts->podpce->with_modes(c.rank.d);
      row.evr = pod::evr(s.state_basis, c.rank.d);
      switch (c.covariance) {
        case CovarianceKind::R: prob.R = r_std; break;
        case CovarianceKind::RTilde: prob.R = surrogate::metamodel_error_covariance(s, r_std).matrix; break;
        case CovarianceKind::RTildeCorrected:
          prob.R = surrogate::corrected_error_covariance(s, r_std, s.pce.validation_bias()).matrix;
          break;
      }
      res = assimilate::solve_podpce3dvar(s, prob, optimizer);
    } else {
      if (!c.ts->poden) throw NumericalError("PODEn surrogate unavailable: " + c.ts->poden_error);
      auto s = *c.ts->poden;
      if (c.rank.d > s.joint.full_rank()) {
        throw ValidationError("requested " + std::to_string(c.rank.d) + " modes but basis has " +
                              std::to_string(s.joint.full_rank()));
      }
      s.joint = s.joint.with_retained(c.rank.d);
      row.evr = pod::evr(s.joint, c.rank.d);
      prob.R = c.covariance == CovarianceKind::R ? r_std : surrogate::poden_error_covariance(s, r_std).matrix;
      res = assimilate::solve_poden3dvar(s, prob);
    }
    row.cost = res.cost;
    row.surrogate_calls = res.evaluations;
    row.iterations = res.iterations;
    row.converged = res.converged;
    row.reason = res.reason;
    fill_metrics(row, res.x_a, st.invert(res.y_a), *c.y_b_model, st, c.ref, grid);
  } catch (const std::exception& e) {
    mark_failed(row, e.what());
  }
  row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

std::vector<CovarianceKind> unique_covariances(const std::vector<CovarianceKind>& in, SurrogateKind kind) {
  // The linear surrogate has no expansion term, so both augmented kinds coincide.
  std::vector<CovarianceKind> out;
  for (auto c : in) {
    if (kind == SurrogateKind::PodEn && c == CovarianceKind::RTildeCorrected) c = CovarianceKind::RTilde;
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

VectorXd draw_truth(std::uint64_t seed) {
  Rng rng(seed, "truth");
  const auto bounds = toymodel::parameter_bounds();
  VectorXd x(toymodel::kParamCount);
  for (int i = 0; i < toymodel::kParamCount; ++i) x(i) = rng.uniform(bounds[i].lower, bounds[i].upper);
  return x;
}

bool wants(const std::vector<SurrogateKind>& kinds, SurrogateKind k) {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

}  // namespace

ExperimentReport run_twin(const TwinConfig& config) {
  config.validate();
  ExperimentReport report;
  report.experiment = config.experiment;
  report.seed = config.seed;
  const VectorXd x_t = config.x_true ? *config.x_true : draw_truth(config.seed);
  report.x_true = x_t;
  const auto& grid = config.grid;
  const VectorXd y_t = toymodel::simulate(x_t, grid);
  const VectorXd x_b = toymodel::table_means();
  const VectorXd y_b_model = toymodel::simulate(x_b, grid);
  const MatrixXd B = background_covariance(config.background, x_b, &x_t);

  const int n_max = config.training_sizes.back();
  const MatrixXd params = toymodel::sample_parameters(toymodel::parameter_bounds(), n_max, config.seed);
  const MatrixXd states = toymodel::simulate_ensemble(params, grid, config.workers);

  std::vector<TrainingSet> sets;
  for (int n : config.training_sizes) {
    sets.push_back(prepare(params, states, n, config.mode_numbers, config.include_evr, config.evr_threshold,
                           wants(config.surrogates, SurrogateKind::PodPce),
                           wants(config.surrogates, SurrogateKind::PodEn), config.pce, config.seed));
  }
  std::vector<NoisyObservation> observations;
  std::vector<MatrixXd> r_phys;
  for (double level : config.noise_levels) {
    observations.push_back(inject_noise(y_t, grid.time_count(), level, config.seed));
    r_phys.push_back(observations.back().R());
    if (!observations.back().floored_series.empty()) {
      report.notes.push_back("noise " + format_level(level) + ": " +
                             std::to_string(observations.back().floored_series.size()) +
                             " constant series used the floored noise std");
    }
  }

  std::vector<CellSpec> cells;
  for (std::size_t a = 0; a < config.noise_levels.size(); ++a) {
    for (const auto& ts : sets) {
      for (auto kind : config.surrogates) {
        const auto& ranks = kind == SurrogateKind::PodPce ? ts.podpce_ranks : ts.poden_ranks;
        std::vector<Rank> use = ranks;
        if (use.empty()) {
          for (int d : config.mode_numbers) use.push_back({d, false});
          if (config.include_evr) use.push_back({0, true});
        }
        for (const auto& rank : use) {
          for (auto cov : unique_covariances(config.covariances, kind)) {
            for (const auto& [ab, ar] : config.alphas) {
              CellSpec c;
              c.ts = &ts;
              c.kind = kind;
              c.rank = rank;
              c.covariance = cov;
              c.alpha_B = ab;
              c.alpha_R = ar;
              c.noise = config.noise_levels[a];
              c.y_o = &observations[a].y_o;
              c.R_phys = &r_phys[a];
              c.B = B;
              c.ref = {&y_t, &observations[a].y_o, &x_t};
              c.y_b_model = &y_b_model;
              cells.push_back(std::move(c));
            }
          }
        }
      }
    }
  }
  report.rows.resize(cells.size());
  parallel_for(cells.size(), config.workers, [&](std::size_t i) {
    report.rows[i] = run_cell(cells[i], config.experiment, config.optimizer, grid);
  });
  return report;
}

TwinConfig default_covgrid_config() {
  TwinConfig c;
  c.experiment = "covgrid";
  c.noise_levels = {0.10};
  c.training_sizes = {400};
  c.mode_numbers = {5};
  c.include_evr = false;
  c.alphas = default_alpha_grid();
  return c;
}

ExperimentReport run_covariance_grid(const TwinConfig& config) { return run_twin(config); }

MatrixXd covariance_grid_matrix(const ExperimentReport& report, std::vector<double>* alpha_b_values,
                                std::vector<double>* alpha_r_values) {
  std::vector<double> bs, rs;
  for (const auto& row : report.rows) {
    if (std::find(bs.begin(), bs.end(), row.alpha_B) == bs.end()) bs.push_back(row.alpha_B);
    if (std::find(rs.begin(), rs.end(), row.alpha_R) == rs.end()) rs.push_back(row.alpha_R);
  }
  MatrixXd m = MatrixXd::Constant(static_cast<Eigen::Index>(bs.size()), static_cast<Eigen::Index>(rs.size()), kNaN);
  for (const auto& row : report.rows) {
    const auto i = std::find(bs.begin(), bs.end(), row.alpha_B) - bs.begin();
    const auto j = std::find(rs.begin(), rs.end(), row.alpha_R) - rs.begin();
    m(i, j) = row.rmse_truth;
  }
  if (alpha_b_values) *alpha_b_values = bs;
  if (alpha_r_values) *alpha_r_values = rs;
  return m;
}

ExperimentReport run_bootstrap(const BootstrapConfig& config) {
  const auto& tw = config.twin;
  tw.validate();
  if (config.replicates < 1) throw ValidationError("bootstrap needs at least one replicate");
  ExperimentReport report;
  report.experiment = tw.experiment;
  report.seed = tw.seed;
  const VectorXd x_t = tw.x_true ? *tw.x_true : draw_truth(tw.seed);
  report.x_true = x_t;
  const auto& grid = tw.grid;
  const VectorXd y_t = toymodel::simulate(x_t, grid);
  const VectorXd x_b = toymodel::table_means();
  const VectorXd y_b_model = toymodel::simulate(x_b, grid);
  const MatrixXd B = background_covariance(tw.background, x_b, &x_t);
  const double level = tw.noise_levels.front();
  const auto obs = inject_noise(y_t, grid.time_count(), level, tw.seed);
  const MatrixXd r_phys = obs.R();
  const int n = tw.training_sizes.front();
  const auto [alpha_b, alpha_r] = tw.alphas.front();

  std::vector<std::vector<ReportRow>> per_replicate(config.replicates);
  parallel_for(static_cast<std::size_t>(config.replicates), tw.workers, [&](std::size_t r) {
    const std::string stream = "bootstrap/" + std::to_string(r);
    const MatrixXd params = toymodel::sample_parameters(toymodel::parameter_bounds(), n, tw.seed, stream);
    const MatrixXd states = toymodel::simulate_ensemble(params, grid, 1);
    const auto ts = prepare(params, states, n, tw.mode_numbers, tw.include_evr, tw.evr_threshold,
                            wants(tw.surrogates, SurrogateKind::PodPce), wants(tw.surrogates, SurrogateKind::PodEn),
                            tw.pce, fnv1a(stream, tw.seed));
    for (auto kind : tw.surrogates) {
      const auto& ranks = kind == SurrogateKind::PodPce ? ts.podpce_ranks : ts.poden_ranks;
      for (const auto& rank : ranks) {
        for (auto cov : unique_covariances(tw.covariances, kind)) {
          CellSpec c;
          c.ts = &ts;
          c.kind = kind;
          c.rank = rank;
          c.covariance = cov;
          c.alpha_B = alpha_b;
          c.alpha_R = alpha_r;
          c.noise = level;
          c.replicate = static_cast<int>(r);
          c.y_o = &obs.y_o;
          c.R_phys = &r_phys;
          c.B = B;
          c.ref = {&y_t, &obs.y_o, &x_t};
          c.y_b_model = &y_b_model;
          per_replicate[r].push_back(run_cell(c, tw.experiment, tw.optimizer, grid));
        }
      }
      if (ranks.empty()) {
        ReportRow row;
        row.experiment = tw.experiment;
        row.surrogate = to_string(kind);
        row.n = n;
        row.noise = level;
        row.replicate = static_cast<int>(r);
        mark_failed(row, kind == SurrogateKind::PodPce ? ts.podpce_error : ts.poden_error);
        per_replicate[r].push_back(row);
      }
    }
  });
  for (auto& rows : per_replicate) {
    for (auto& row : rows) report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<BootstrapSummary> summarize_bootstrap(const ExperimentReport& report) {
  // Key: surrogate, covariance, rank (EVR-chosen ranks grouped together).
  std::map<std::tuple<std::string, std::string, int>, BootstrapSummary> groups;
  std::vector<std::tuple<std::string, std::string, int>> order;
  for (const auto& row : report.rows) {
    if (!row.error.empty() || !std::isfinite(row.rmse_truth)) continue;
    const auto key = std::make_tuple(row.surrogate, row.covariance, row.d_from_evr ? -1 : row.d);
    auto it = groups.find(key);
    if (it == groups.end()) {
      BootstrapSummary s{row.surrogate, row.covariance, row.d_from_evr ? 0 : row.d, row.d_from_evr,
                         row.rmse_truth, 0.0, row.rmse_truth, 0};
      it = groups.emplace(key, s).first;
      order.push_back(key);
    }
    auto& s = it->second;
    s.min = std::min(s.min, row.rmse_truth);
    s.max = std::max(s.max, row.rmse_truth);
    s.mean += row.rmse_truth;
    s.replicates += 1;
  }
  std::vector<BootstrapSummary> out;
  for (const auto& key : order) {
    auto s = groups.at(key);
    s.mean /= s.replicates;
    out.push_back(s);
  }
  return out;
}

ExperimentReport run_measurement(const MeasurementConfig& config) {
  config.validate();
  ExperimentReport report;
  report.experiment = config.experiment;
  report.seed = config.seed;
  const auto& grid = config.grid;

  VectorXd y_o;
  std::optional<VectorXd> hidden;
  if (config.observations) {
    y_o = *config.observations;
    require_finite(y_o, "observation vector");
  } else {
    hidden = config.hidden_params ? *config.hidden_params : draw_truth(config.seed);
    y_o = toymodel::simulate(*hidden, grid);
    report.x_true = *hidden;
    report.notes.push_back("observations planted from the toy model at hidden parameters");
  }
  std::vector<int> floored;
  const VectorXd sigma = series_noise_std(y_o, grid.time_count(), config.obs_error_level, &floored);
  const MatrixXd r_phys = sigma.array().square().matrix().asDiagonal();
  const VectorXd x_b = toymodel::table_means();
  const VectorXd y_b_model = toymodel::simulate(x_b, grid);
  const MatrixXd B = background_covariance(BackgroundKind::TableStd, x_b, nullptr);
  const Reference ref{nullptr, &y_o, hidden ? &*hidden : nullptr};

  // Reference analysis in physical units; the cost is invariant under the
  // per-component standardization, so one run serves every training size.
  assimilate::AssimilationProblem prob;
  prob.x_b = x_b;
  prob.B = B;
  prob.y_o = y_o;
  prob.R = r_phys;
  prob.bounds = toymodel::parameter_bounds();
  const auto classical_start = std::chrono::steady_clock::now();
  std::optional<assimilate::AnalysisResult> classical;
  std::string classical_error;
  try {
    classical = assimilate::solve_classical_3dvar(
        [&](const VectorXd& x) { return toymodel::simulate(x, grid); }, prob, config.fd, config.optimizer);
  } catch (const std::exception& e) {
    classical_error = e.what();
  }
  const double classical_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - classical_start).count();

  const int n_max = config.training_sizes.back();
  const MatrixXd params = toymodel::sample_parameters(toymodel::parameter_bounds(), n_max, config.seed);
  const MatrixXd states = toymodel::simulate_ensemble(params, grid, config.workers);
  std::vector<TrainingSet> sets;
  for (int n : config.training_sizes) {
    sets.push_back(prepare(params, states, n, config.mode_numbers, config.include_evr, config.evr_threshold, true,
                           config.include_poden, config.pce, config.seed));
  }

  std::vector<CellSpec> cells;
  std::vector<ReportRow> classical_rows;
  for (const auto& ts : sets) {
    ReportRow row;
    row.experiment = config.experiment;
    row.surrogate = "classical";
    row.covariance = "R";
    row.n = ts.n;
    row.noise = config.obs_error_level;
    if (classical) {
      row.cost = classical->cost;
      row.forward_calls = classical->evaluations;
      row.iterations = classical->iterations;
      row.converged = classical->converged;
      row.reason = classical->reason;
      fill_metrics(row, classical->x_a, classical->y_a, y_b_model, ts.standardizer, ref, grid);
    } else {
      mark_failed(row, classical_error);
    }
    row.wall_seconds = classical_seconds;
    classical_rows.push_back(row);

    std::vector<SurrogateKind> kinds{SurrogateKind::PodPce};
    if (config.include_poden) kinds.push_back(SurrogateKind::PodEn);
    for (auto kind : kinds) {
      const auto& ranks = kind == SurrogateKind::PodPce ? ts.podpce_ranks : ts.poden_ranks;
      for (const auto& rank : ranks) {
        for (auto cov : unique_covariances(config.covariances, kind)) {
          CellSpec c;
          c.ts = &ts;
          c.kind = kind;
          c.rank = rank;
          c.covariance = cov;
          c.noise = config.obs_error_level;
          c.y_o = &y_o;
          c.R_phys = &r_phys;
          c.B = B;
          c.ref = ref;
          c.y_b_model = &y_b_model;
          cells.push_back(std::move(c));
        }
      }
    }
  }
  std::vector<ReportRow> rows(cells.size());
  parallel_for(cells.size(), config.workers, [&](std::size_t i) {
    rows[i] = run_cell(cells[i], config.experiment, config.optimizer, grid);
  });
  // Classical reference first within each training size.
  std::size_t next = 0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    report.rows.push_back(classical_rows[s]);
    while (next < rows.size() && rows[next].n == sets[s].n) report.rows.push_back(std::move(rows[next++]));
  }
  return report;
}

}  // namespace surroda::experiments
