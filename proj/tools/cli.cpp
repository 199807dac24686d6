/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "surroda/io.hpp"

namespace surroda::cli {
namespace {

namespace fs = std::filesystem;
using io::json;

struct Options {
  std::string command;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out = "results";
  bool b_from_truth = false;
};

struct Context {
  io::RunConfig config;
  toymodel::ToyGrid grid;
  io::Provenance provenance;
  fs::path out;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Long-format table: first line is the provenance comment.
class LongCsv {
 public:
  LongCsv(const fs::path& path, const io::Provenance& provenance, const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw ValidationError("cannot write " + path.string());
    out_ << io::header_line(provenance) << "\n";
    for (std::size_t j = 0; j < columns.size(); ++j) out_ << (j ? "," : "") << columns[j];
    out_ << "\n";
  }
  LongCsv& cell(const std::string& s) {
    out_ << (first_ ? "" : ",") << s;
    first_ = false;
    return *this;
  }
  LongCsv& cell(double v) { return cell(full(v)); }
  LongCsv& cell(int v) { return cell(std::to_string(v)); }
  void end() {
    out_ << "\n";
    first_ = true;
  }

 private:
  std::ofstream out_;
  bool first_ = true;
};

std::string rank_label(const experiments::ReportRow& r) {
  return r.d_from_evr ? "evr(d=" + std::to_string(r.d) + ")" : "d=" + std::to_string(r.d);
}

Context prepare(const Options& opt) {
  Context ctx;
  std::optional<fs::path> path;
  if (opt.config) {
    path = io::resolve_config(*opt.config);
  } else {
    static const std::map<std::string, std::string> defaults{{"twin", "twin_default"},
                                                             {"covgrid", "covgrid_default"},
                                                             {"bootstrap", "bootstrap_default"},
                                                             {"measure", "measure_default"},
                                                             {"assimilate", "assimilate_default"}};
    if (const auto it = defaults.find(opt.command); it != defaults.end()) {
      const fs::path named = io::config_directory() / (it->second + ".json");
      if (fs::is_regular_file(named)) path = named;
    }
  }
  const json doc = path ? io::load_json(*path) : json{{"schema_version", io::kConfigSchemaVersion}};
  ctx.config = io::parse_run_config(doc, path ? path->parent_path() : fs::current_path());
  if (opt.seed) ctx.config.seed = *opt.seed;
  if (opt.workers) {
    if (*opt.workers < 1) throw ValidationError("--workers must be at least 1");
    ctx.config.workers = *opt.workers;
  }
  if (opt.b_from_truth) ctx.config.b_from_truth = true;
  ctx.grid = io::load_grid(ctx.config);
  ctx.provenance = {io::config_hash(ctx.config), ctx.config.seed};
  ctx.out = opt.out;
  fs::create_directories(ctx.out);
  io::save_json(ctx.out / "config.json", io::to_json(ctx.config), ctx.provenance);
  return ctx;
}

fs::path input_path(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : ctx.config.base_dir / path;
}

MatrixXd parameters(const Context& ctx) {
  if (ctx.config.params_file) {
    const MatrixXd p = io::read_matrix_csv(input_path(ctx, *ctx.config.params_file));
    if (p.cols() != toymodel::kParamCount) {
      throw ValidationError("parameter file needs " + std::to_string(toymodel::kParamCount) + " columns");
    }
    return p;
  }
  return toymodel::sample_parameters(toymodel::parameter_bounds(), ctx.config.sample_size, ctx.config.seed);
}

/// Params (n x m_x) and states (m_y x n) from files or a fresh ensemble.
std::pair<MatrixXd, MatrixXd> ensemble(const Context& ctx) {
  MatrixXd params = parameters(ctx);
  if (ctx.config.snapshots_file) {
    const auto snaps = io::read_snapshot_csv(input_path(ctx, *ctx.config.snapshots_file));
    if (snaps.cols() != params.rows()) {
      throw ValidationError("snapshot member count " + std::to_string(snaps.cols()) +
                            " does not match the parameter rows " + std::to_string(params.rows()));
    }
    return {params, snaps.data};
  }
  return {params, toymodel::simulate_ensemble(params, ctx.grid, ctx.config.workers)};
}

std::vector<std::string> member_ids(Eigen::Index n) {
  std::vector<std::string> ids;
  for (Eigen::Index j = 0; j < n; ++j) ids.push_back("m" + std::to_string(j));
  return ids;
}

std::string cmd_sample(const Context& ctx) {
  const MatrixXd p = parameters(ctx);
  io::write_matrix_csv(ctx.out / "params.csv", p, ctx.provenance, toymodel::parameter_names());
  return std::to_string(p.rows()) + " parameter sets";
}

std::string cmd_simulate(const Context& ctx) {
  const MatrixXd p = parameters(ctx);
  pod::SnapshotMatrix s;
  s.data = toymodel::simulate_ensemble(p, ctx.grid, ctx.config.workers);
  s.row_labels = toymodel::state_labels(ctx.grid);
  s.member_ids = member_ids(p.rows());
  io::write_matrix_csv(ctx.out / "params.csv", p, ctx.provenance, toymodel::parameter_names());
  io::write_snapshot_csv(ctx.out / "snapshots.csv", s, ctx.provenance);
  return std::to_string(s.cols()) + " members x " + std::to_string(s.rows()) + " state components";
}

std::string cmd_fit_pod(const Context& ctx) {
  const auto [params, states] = ensemble(ctx);
  const auto basis = pod::truncate(pod::fit_pod(states), io::truncation_criterion(ctx.config));
  io::save_json(ctx.out / "pod_basis.json", io::to_json(basis), ctx.provenance);
  LongCsv spectrum(ctx.out / "pod_spectrum.csv", ctx.provenance, {"k", "singular_value", "evr"});
  for (int k = 0; k < basis.full_rank(); ++k) {
    spectrum.cell(k + 1).cell(basis.singular_values()(k)).cell(pod::evr(basis, k + 1)).end();
  }
  return "retained " + std::to_string(basis.retained()) + " modes, evr " + fmt(pod::evr(basis, basis.retained()));
}

surrogate::PodPceSurrogate fit_podpce(const Context& ctx) {
  const auto [params, states] = ensemble(ctx);
  return surrogate::build_podpce(params.transpose(), states, io::truncation_criterion(ctx.config),
                                 toymodel::parameter_bounds(), io::podpce_config(ctx.config),
                                 fnv1a("split", ctx.config.seed));
}

std::string cmd_fit_pce(const Context& ctx) {
  const auto s = fit_podpce(ctx);
  io::save_json(ctx.out / "pce_model.json", io::to_json(s.pce), ctx.provenance);
  LongCsv modes(ctx.out / "pce_modes.csv", ctx.provenance, {"mode", "degree", "validation_mse", "validation_bias"});
  for (int k = 0; k < s.pce.output_dim(); ++k) {
    modes.cell(k + 1).cell(s.pce.mode_degrees()[k]).cell(s.pce.empirical_errors()(k)).cell(s.pce.validation_bias()(k));
    modes.end();
  }
  return std::to_string(s.pce.output_dim()) + " mode expansions, max degree " + std::to_string(s.pce.max_degree());
}

std::string cmd_build_surrogate(const Context& ctx) {
  if (ctx.config.surrogate_kind == "poden") {
    const auto [params, states] = ensemble(ctx);
    const auto s = surrogate::build_poden(params.transpose(), states, io::truncation_criterion(ctx.config));
    io::save_json(ctx.out / "surrogate.json", io::to_json(s), ctx.provenance);
    return "poden surrogate with " + std::to_string(s.rank()) + " modes";
  }
  const auto s = fit_podpce(ctx);
  io::save_json(ctx.out / "surrogate.json", io::to_json(s), ctx.provenance);
  return "podpce surrogate with " + std::to_string(s.rank()) + " modes";
}

void write_report(const Context& ctx, const experiments::ExperimentReport& report, json summary = json::object()) {
  io::write_report_csv(ctx.out / "report.csv", report, ctx.provenance);
  io::write_timings_csv(ctx.out / "timings.csv", report, ctx.provenance);
  json doc = io::report_summary(report);
  for (const auto& [k, v] : summary.items()) doc[k] = v;
  io::save_json(ctx.out / "summary.json", doc, ctx.provenance);
}

std::string report_line(const experiments::ExperimentReport& report) {
  int failed = 0;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : report.rows) {
    if (!r.error.empty()) {
      ++failed;
    } else {
      const double v = std::isfinite(r.rmse_truth) ? r.rmse_truth : r.rmse_obs;
      best = std::min(best, v);
    }
  }
  return std::to_string(report.rows.size()) + " cells, " + std::to_string(failed) + " failed, best rmse " + fmt(best);
}

void write_sweeps(const Context& ctx, const experiments::ExperimentReport& report) {
  LongCsv noise(ctx.out / "noise_sweep.csv", ctx.provenance,
                {"series", "surrogate", "covariance", "rank", "n", "noise", "rmse_truth", "rmse_obs"});
  for (const auto& r : report.rows) {
    noise.cell(r.surrogate + "/" + r.covariance + "/" + rank_label(r) + "/n=" + std::to_string(r.n))
        .cell(r.surrogate)
        .cell(r.covariance)
        .cell(rank_label(r))
        .cell(r.n)
        .cell(r.noise)
        .cell(r.rmse_truth)
        .cell(r.rmse_obs)
        .end();
  }
  LongCsv modes(ctx.out / "mode_sweep.csv", ctx.provenance,
                {"series", "surrogate", "covariance", "noise", "n", "d", "d_from_evr", "rmse_truth", "rmse_obs"});
  for (const auto& r : report.rows) {
    modes.cell(r.surrogate + "/" + r.covariance + "/noise=" + fmt(r.noise) + "/n=" + std::to_string(r.n))
        .cell(r.surrogate)
        .cell(r.covariance)
        .cell(r.noise)
        .cell(r.n)
        .cell(r.d)
        .cell(r.d_from_evr ? 1 : 0)
        .cell(r.rmse_truth)
        .cell(r.rmse_obs)
        .end();
  }
}

/// Single analysis with a previously built surrogate, in physical units.
std::string assimilate_loaded(const Context& ctx) {
  const auto& c = ctx.config;
  if (c.b_from_truth) throw ValidationError("b_from_truth is only available without a surrogate input");
  const json doc = io::load_json(input_path(ctx, *c.surrogate_file));
  VectorXd x_t;
  if (c.x_true) {
    x_t = Eigen::Map<const VectorXd>(c.x_true->data(), static_cast<Eigen::Index>(c.x_true->size()));
  } else {
    x_t = toymodel::sample_parameters(toymodel::parameter_bounds(), 1, c.seed, "truth").row(0).transpose();
  }
  const VectorXd y_t = toymodel::simulate(x_t, ctx.grid);
  const auto obs = experiments::inject_noise(y_t, ctx.grid.time_count(), c.noise_level, c.seed);
  assimilate::AssimilationProblem prob;
  prob.x_b = toymodel::table_means();
  prob.B = toymodel::table_stds().array().square().matrix().asDiagonal();
  prob.y_o = obs.y_o;
  prob.bounds = toymodel::parameter_bounds();
  prob.alpha_B = c.alpha_B;
  prob.alpha_R = c.alpha_R;
  const auto kind = surrogate::covariance_kind_from_string(c.covariance);
  assimilate::AnalysisResult result;
  if (io::is_podpce_document(doc)) {
    const auto s = io::podpce_from_json(doc);
    const MatrixXd R = obs.R();
    if (kind == surrogate::CovarianceKind::R) {
      prob.R = R;
    } else if (kind == surrogate::CovarianceKind::RTilde) {
      prob.R = surrogate::metamodel_error_covariance(s, R).matrix;
    } else {
      prob.R = surrogate::corrected_error_covariance(s, R, s.pce.validation_bias()).matrix;
    }
    result = assimilate::solve_podpce3dvar(s, prob, c.optimizer);
  } else {
    const auto s = io::poden_from_json(doc);
    prob.R = kind == surrogate::CovarianceKind::R ? obs.R() : surrogate::poden_error_covariance(s, obs.R()).matrix;
    result = assimilate::solve_poden3dvar(s, prob);
  }
  json analysis = io::to_json(result, toymodel::parameter_names(), toymodel::table_stds());
  json truth = json::object();
  for (int i = 0; i < toymodel::kParamCount; ++i) truth[toymodel::parameter_names()[i]] = x_t(i);
  analysis["x_true"] = truth;
  io::save_json(ctx.out / "analysis.json", analysis, ctx.provenance);
  std::string xs;
  for (int i = 0; i < result.x_a.size(); ++i) xs += (i ? " " : "") + toymodel::parameter_names()[i] + "=" + fmt(result.x_a(i));
  return "analysis " + xs + ", cost " + fmt(result.cost);
}

std::string cmd_assimilate(const Context& ctx) {
  const auto& c = ctx.config;
  if (c.surrogate_file) return assimilate_loaded(ctx);
  auto t = io::twin_config(c, ctx.grid);
  t.experiment = "assimilate";
  t.noise_levels = {c.noise_level};
  t.training_sizes = {c.sample_size};
  t.mode_numbers.clear();
  t.include_evr = !c.modes;
  if (c.modes) t.mode_numbers = {*c.modes};
  t.surrogates = {experiments::surrogate_kind_from_string(c.surrogate_kind)};
  t.covariances = {surrogate::covariance_kind_from_string(c.covariance)};
  t.alphas = {{c.alpha_B, c.alpha_R}};
  const auto report = experiments::run_twin(t);
  write_report(ctx, report);
  const auto& r = report.rows.front();
  if (!r.error.empty()) throw NumericalError(r.error);
  return "rmse_truth " + fmt(r.rmse_truth) + ", rmse_obs " + fmt(r.rmse_obs) + " (" + rank_label(r) + ")";
}

std::string cmd_twin(const Context& ctx) {
  auto t = io::twin_config(ctx.config, ctx.grid);
  t.experiment = "twin";
  const auto report = experiments::run_twin(t);
  write_report(ctx, report);
  write_sweeps(ctx, report);
  return report_line(report);
}

std::string cmd_covgrid(const Context& ctx) {
  auto t = io::twin_config(ctx.config, ctx.grid);
  t.experiment = "covgrid";
  const auto report = experiments::run_covariance_grid(t);
  write_report(ctx, report);
  LongCsv grid(ctx.out / "covgrid.csv", ctx.provenance,
               {"surrogate", "covariance", "d", "alpha_B", "alpha_R", "rmse_truth", "rmse_obs"});
  for (const auto& r : report.rows) {
    grid.cell(r.surrogate).cell(r.covariance).cell(r.d).cell(r.alpha_B).cell(r.alpha_R).cell(r.rmse_truth);
    grid.cell(r.rmse_obs).end();
  }
  return report_line(report);
}

std::string cmd_bootstrap(const Context& ctx) {
  experiments::BootstrapConfig b;
  b.twin = io::twin_config(ctx.config, ctx.grid);
  b.twin.experiment = "bootstrap";
  b.replicates = ctx.config.replicates;
  const auto report = experiments::run_bootstrap(b);
  const auto stats = experiments::summarize_bootstrap(report);
  json summary = json::array();
  LongCsv box(ctx.out / "bootstrap_summary.csv", ctx.provenance,
              {"surrogate", "covariance", "rank", "replicates", "min", "mean", "max"});
  for (const auto& s : stats) {
    const std::string rank = s.d_from_evr ? "evr" : "d=" + std::to_string(s.d);
    box.cell(s.surrogate).cell(s.covariance).cell(rank).cell(s.replicates).cell(s.min).cell(s.mean).cell(s.max).end();
    summary.push_back({{"surrogate", s.surrogate}, {"covariance", s.covariance}, {"rank", rank},
                       {"replicates", s.replicates}, {"min", s.min}, {"mean", s.mean}, {"max", s.max}});
  }
  write_report(ctx, report, json{{"bootstrap", summary}});
  LongCsv data(ctx.out / "bootstrap_box.csv", ctx.provenance,
               {"surrogate", "covariance", "rank", "replicate", "rmse_truth"});
  for (const auto& r : report.rows) {
    data.cell(r.surrogate).cell(r.covariance).cell(r.d_from_evr ? "evr" : "d=" + std::to_string(r.d));
    data.cell(r.replicate).cell(r.rmse_truth).end();
  }
  return report_line(report);
}

std::string cmd_measure(const Context& ctx) {
  auto m = io::measurement_config(ctx.config, ctx.grid);
  const auto report = experiments::run_measurement(m);
  write_report(ctx, report);
  LongCsv sweep(ctx.out / "measure_sweep.csv", ctx.provenance,
                {"surrogate", "covariance", "n", "d", "d_from_evr", "rmse_obs", "rel_rmse_obs", "forward_calls"});
  for (const auto& r : report.rows) {
    sweep.cell(r.surrogate).cell(r.covariance).cell(r.n).cell(r.d).cell(r.d_from_evr ? 1 : 0);
    sweep.cell(r.rmse_obs).cell(r.rel_rmse_obs).cell(r.forward_calls).end();
  }
  return report_line(report);
}

const std::map<std::string, std::pair<std::string, std::string (*)(const Context&)>>& commands() {
  static const std::map<std::string, std::pair<std::string, std::string (*)(const Context&)>> table{
      {"sample", {"Draw parameter sets uniformly within the bounds", cmd_sample}},
      {"simulate", {"Run the toy model over a parameter ensemble", cmd_simulate}},
      {"fit-pod", {"Decompose a snapshot ensemble", cmd_fit_pod}},
      {"fit-pce", {"Fit sparse chaos expansions of the POD coefficients", cmd_fit_pce}},
      {"build-surrogate", {"Build and save a POD-PCE or PODEn surrogate", cmd_build_surrogate}},
      {"assimilate", {"Run one twin analysis or assimilate with a saved surrogate", cmd_assimilate}},
      {"twin", {"Twin-experiment sweep over noise, size and rank", cmd_twin}},
      {"covgrid", {"Twin cells over the covariance scale grid", cmd_covgrid}},
      {"bootstrap", {"Repeat twin cells with fresh training ensembles", cmd_bootstrap}},
      {"measure", {"Classical and surrogate 3DVAR against one observation record", cmd_measure}},
  };
  return table;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"surroda: surrogate-based variational data assimilation", "surroda"};
  app.set_version_flag("--version", io::tool_version());
  app.require_subcommand(1, 1);
  Options opt;
  for (const auto& [name, entry] : commands()) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", opt.config, "Config file or named default");
    sub->add_option("--seed", opt.seed, "Global seed (overrides the config)");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--workers", opt.workers, "Worker threads (overrides the config)");
    sub->add_flag("--b-from-truth", opt.b_from_truth, "Background std from |x_b - x_true| instead of the table");
    sub->callback([&opt, name = name] { opt.command = name; });
  }
  if (!args.empty() && args[0].rfind('-', 0) != 0 && !commands().count(args[0])) {
    std::cerr << "error: unknown subcommand '" << args[0] << "'\n" << app.help();
    return 1;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << io::tool_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  try {
    const Context ctx = prepare(opt);
    const std::string line = commands().at(opt.command).second(ctx);
    std::cout << opt.command << ": " << line << " -> " << ctx.out.string() << "\n";
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const io::json::exception& e) {
    std::cerr << "error: malformed document: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace surroda::cli
