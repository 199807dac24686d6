/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "surroda/assimilate.hpp"
#include "surroda/common.hpp"
#include "surroda/surrogate.hpp"
#include "surroda/toymodel.hpp"

namespace surroda::experiments {

/// Per-component noise std: `level` times the population std of the series
/// (runs of `series_length` consecutive components) holding the component.
/// Series without spread get level * 1e-6 * |mean| + 1e-12 and are listed in
/// `floored` when non-null.
VectorXd series_noise_std(const VectorXd& y_t, int series_length, double level,
                          std::vector<int>* floored = nullptr);

struct NoisyObservation {
  VectorXd y_o;
  VectorXd sigma;
  std::vector<int> floored_series;

  MatrixXd R() const { return MatrixXd(sigma.array().square().matrix().asDiagonal()); }
};

/// Gaussian white noise with per-series std; stream "noise/<level>" unless named.
NoisyObservation inject_noise(const VectorXd& y_t, int series_length, double level, std::uint64_t seed,
                              const std::string& stream = "");

/// Root mean square of the standardized difference.
double rmse_global(const VectorXd& y_ref, const VectorXd& y_hat, const surrogate::Standardizer& standardizer);
/// rmse_global divided by the root mean square of the standardized reference.
double relative_rmse_global(const VectorXd& y_ref, const VectorXd& y_hat,
                            const surrogate::Standardizer& standardizer);

enum class Grouping { Variable, Station, VariableStation };

struct GroupRmse {
  std::string label;
  double rmse = 0.0;
  int count = 0;
};

std::vector<GroupRmse> rmse_by(const VectorXd& y_ref, const VectorXd& y_hat,
                               const surrogate::Standardizer& standardizer, const toymodel::ToyGrid& grid,
                               Grouping grouping);

enum class SurrogateKind { PodPce, PodEn };
std::string to_string(SurrogateKind kind);
SurrogateKind surrogate_kind_from_string(const std::string& name);

/// Background covariance choice for twin runs.
enum class BackgroundKind { TableStd, FromTruth };

struct TwinConfig {
  std::string experiment = "twin";
  std::uint64_t seed = 42;
  std::optional<VectorXd> x_true;
  std::vector<double> noise_levels{0.01, 0.05, 0.10, 0.20, 0.40};
  std::vector<int> training_sizes{400};
  std::vector<int> mode_numbers{1, 2, 3, 4, 5, 6};
  /// Adds a cell whose rank is the smallest reaching `evr_threshold`.
  bool include_evr = true;
  double evr_threshold = 0.95;
  std::vector<SurrogateKind> surrogates{SurrogateKind::PodPce};
  std::vector<surrogate::CovarianceKind> covariances{surrogate::CovarianceKind::RTilde};
  /// (alpha_B, alpha_R) pairs.
  std::vector<std::pair<double, double>> alphas{{1.0, 1.0}};
  BackgroundKind background = BackgroundKind::TableStd;
  surrogate::PodPceConfig pce;
  assimilate::OptimizerConfig optimizer;
  int workers = 1;
  toymodel::ToyGrid grid = toymodel::default_grid();

  void validate() const;
};

/// The five-by-five scale grid {0.01, 0.1, 1, 10, 100}^2.
std::vector<std::pair<double, double>> default_alpha_grid();

struct ReportRow {
  std::string experiment;
  std::string surrogate;
  std::string covariance;
  int d = 0;
  bool d_from_evr = false;
  double evr = 0.0;
  int n = 0;
  double noise = 0.0;
  double alpha_B = 1.0;
  double alpha_R = 1.0;
  int replicate = -1;
  double rmse_truth = 0.0;      ///< verification run at x_a vs truth, standardized
  double rmse_obs = 0.0;        ///< verification run at x_a vs observation
  double rel_rmse_truth = 0.0;
  double rel_rmse_obs = 0.0;
  double rmse_background = 0.0;  ///< model at x_b vs truth (or observation without truth)
  double rmse_surrogate = 0.0;   ///< solver state y_a vs truth (or observation)
  double param_error = 0.0;      ///< max |x_a - x_t| / prior std, NaN without truth
  std::vector<double> rmse_by_variable;
  std::vector<double> rmse_by_station;
  VectorXd x_a;
  double cost = 0.0;
  int forward_calls = 0;
  int surrogate_calls = 0;
  int iterations = 0;
  bool converged = false;
  std::string reason;
  std::string error;  ///< non-empty when the cell failed
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  std::string experiment;
  std::uint64_t seed = 0;
  VectorXd x_true;  ///< empty when unknown
  std::vector<ReportRow> rows;
  std::vector<std::string> notes;
};

ExperimentReport run_twin(const TwinConfig& config);

/// Twin cells over the full alpha grid (noise 10 %, one rank by default).
TwinConfig default_covgrid_config();
ExperimentReport run_covariance_grid(const TwinConfig& config);
/// RMSE-to-truth matrix indexed [alpha_B][alpha_R] following the order of
/// distinct values in the report.
MatrixXd covariance_grid_matrix(const ExperimentReport& report, std::vector<double>* alpha_b_values = nullptr,
                                std::vector<double>* alpha_r_values = nullptr);

struct BootstrapConfig {
  TwinConfig twin;  ///< noise_levels[0] and training_sizes[0] are used
  int replicates = 50;
};

/// Each replicate draws a fresh ensemble of the configured size.
ExperimentReport run_bootstrap(const BootstrapConfig& config);

struct BootstrapSummary {
  std::string surrogate;
  std::string covariance;
  int d = 0;
  bool d_from_evr = false;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  int replicates = 0;
};
std::vector<BootstrapSummary> summarize_bootstrap(const ExperimentReport& report);

struct MeasurementConfig {
  std::string experiment = "measure";
  std::uint64_t seed = 42;
  /// Physical observation vector; planted from `hidden_params` when empty.
  std::optional<VectorXd> observations;
  std::optional<VectorXd> hidden_params;
  /// Observation error std as a fraction of each series' std.
  double obs_error_level = 0.01;
  std::vector<int> training_sizes{400};
  std::vector<int> mode_numbers{};
  bool include_evr = true;
  double evr_threshold = 0.95;
  bool include_poden = true;
  std::vector<surrogate::CovarianceKind> covariances{surrogate::CovarianceKind::R,
                                                     surrogate::CovarianceKind::RTilde};
  surrogate::PodPceConfig pce;
  assimilate::OptimizerConfig optimizer;
  assimilate::FiniteDifferenceConfig fd;
  int workers = 1;
  toymodel::ToyGrid grid = toymodel::default_grid();

  void validate() const;
};

/// Classical 3DVAR reference plus surrogate solvers; metrics against the
/// observation. Rows with surrogate "classical" hold the reference, one per
/// training size (its analysis does not depend on n, only the standardization).
ExperimentReport run_measurement(const MeasurementConfig& config);

}  // namespace surroda::experiments
