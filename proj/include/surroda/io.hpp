/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "surroda/assimilate.hpp"
#include "surroda/experiments.hpp"
#include "surroda/pce.hpp"
#include "surroda/pod.hpp"
#include "surroda/surrogate.hpp"
#include "surroda/toymodel.hpp"

namespace surroda::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string tool_version();

/// Recorded in the first line of every output file.
struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

/// "surroda <version> config_hash=<hex> seed=<n>" after the comment marker.
std::string header_line(const Provenance& provenance, const std::string& marker = "#");

// --- CSV -------------------------------------------------------------------

/// Header row of member ids, first column row labels, 17 significant digits.
void write_snapshot_csv(const fs::path& path, const pod::SnapshotMatrix& snapshots, const Provenance& provenance);
pod::SnapshotMatrix read_snapshot_csv(const fs::path& path);

/// Plain numeric table with an optional header row of column names.
void write_matrix_csv(const fs::path& path, const MatrixXd& m, const Provenance& provenance,
                      const std::vector<std::string>& columns = {},
                      const std::vector<std::string>& comments = {});
MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* columns = nullptr);

/// Vector stored as one column or one row.
VectorXd read_vector_csv(const fs::path& path);

/// Matrix with "kind=<kind>" in a comment line.
void write_covariance_csv(const fs::path& path, const surrogate::ErrorCovariance& cov, const Provenance& provenance);
surrogate::ErrorCovariance read_covariance_csv(const fs::path& path);

// --- Structured documents ----------------------------------------------------

/// Writes a comment header line then the document.
void save_json(const fs::path& path, const json& doc, const Provenance& provenance);
/// Parses a document, skipping comments.
json load_json(const fs::path& path);

/// Each document carries "format" and "version"; a mismatch names both versions.
void check_format(const json& doc, const std::string& format, int version);

json to_json(const pod::PodBasis& basis);
pod::PodBasis pod_basis_from_json(const json& doc);

json to_json(const pce::PceModel& model);
pce::PceModel pce_model_from_json(const json& doc);

json to_json(const surrogate::PodPceSurrogate& s);
surrogate::PodPceSurrogate podpce_from_json(const json& doc);

json to_json(const surrogate::PodEnSurrogate& s);
surrogate::PodEnSurrogate poden_from_json(const json& doc);

/// Either surrogate kind, dispatched on "format".
bool is_podpce_document(const json& doc);

json to_json(const assimilate::AnalysisResult& result, const std::vector<std::string>& parameter_names,
             const VectorXd& prior_std);

toymodel::ToyGrid grid_from_json(const json& doc);
json to_json(const toymodel::ToyGrid& grid);

// --- Reports -----------------------------------------------------------------

std::vector<std::string> report_columns();
void write_report_csv(const fs::path& path, const experiments::ExperimentReport& report, const Provenance& provenance);
/// Per-cell wall-clock seconds, kept apart from the deterministic report.
void write_timings_csv(const fs::path& path, const experiments::ExperimentReport& report, const Provenance& provenance);
json report_summary(const experiments::ExperimentReport& report);

// --- Run configuration ---------------------------------------------------------

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  std::uint64_t seed = 42;
  int workers = 1;
  std::string toymodel = "toymodel_v1";

  int sample_size = 400;

  std::string surrogate_kind = "podpce";
  std::optional<double> evr_threshold = 0.95;
  std::optional<int> modes;
  int pce_max_degree = 5;
  double pce_train_fraction = 0.75;
  int lars_patience = 10;

  double noise_level = 0.10;
  std::string covariance = "R_tilde";
  double alpha_B = 1.0;
  double alpha_R = 1.0;
  bool b_from_truth = false;
  std::optional<std::vector<double>> x_true;

  assimilate::OptimizerConfig optimizer;

  std::vector<double> noise_levels{0.01, 0.05, 0.10, 0.20, 0.40};
  std::vector<int> training_sizes{400};
  std::vector<int> mode_numbers{1, 2, 3, 4, 5, 6};
  bool include_evr = true;
  std::vector<std::string> surrogates{"podpce"};
  std::vector<std::string> covariances{"R_tilde"};
  bool alpha_grid = false;
  std::vector<std::pair<double, double>> alphas{{1.0, 1.0}};
  int replicates = 50;

  std::optional<std::string> observations_file;
  std::optional<std::vector<double>> hidden_params;
  double obs_error_level = 0.01;
  bool include_poden = true;
  double fd_relative_step = 1e-4;

  std::optional<std::string> params_file;
  std::optional<std::string> snapshots_file;
  std::optional<std::string> surrogate_file;

  /// Directory used to resolve relative input paths.
  fs::path base_dir;
};

/// Strict parse: unknown keys and a missing or different schema_version are rejected.
RunConfig parse_run_config(const json& doc, const fs::path& base_dir = {});
json to_json(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);

/// Resolves a config argument: an existing file path, else `<name>.json` in
/// the config directory (SURRODA_CONFIG_DIR overrides the built-in one).
fs::path resolve_config(const std::string& name_or_path);
fs::path config_directory();

toymodel::ToyGrid load_grid(const RunConfig& config);

experiments::TwinConfig twin_config(const RunConfig& config, const toymodel::ToyGrid& grid);
experiments::MeasurementConfig measurement_config(const RunConfig& config, const toymodel::ToyGrid& grid);
surrogate::PodPceConfig podpce_config(const RunConfig& config);
pod::TruncationCriterion truncation_criterion(const RunConfig& config);

}  // namespace surroda::io
