/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#ifndef SURRODA_VERSION
#define SURRODA_VERSION "0.0.0"
#endif
#ifndef SURRODA_CONFIG_DIR
#define SURRODA_CONFIG_DIR "configs"
#endif

namespace surroda::io {

std::string tool_version() { return SURRODA_VERSION; }

std::string header_line(const Provenance& provenance, const std::string& marker) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(provenance.config_hash));
  return marker + " surroda " + tool_version() + " config_hash=" + hash +
         " seed=" + std::to_string(provenance.seed);
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  while (end && *end == ' ') ++end;
  return end && *end == '\0';
}

double cell(const std::string& text, const fs::path& path, std::size_t line, std::size_t col) {
  double v = 0.0;
  if (!parse_double(text, v)) {
    throw ValidationError(path.string() + ": line " + std::to_string(line) + " column " + std::to_string(col + 1) +
                          ": '" + text + "' is not a number");
  }
  return v;
}

/// Non-comment, non-empty lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> data_lines(const fs::path& path,
                                                             std::vector<std::string>* comments = nullptr) {
  auto in = open_in(path);
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (comments) comments->push_back(line);
      continue;
    }
    out.emplace_back(number, line);
  }
  return out;
}

}  // namespace

// --- CSV -------------------------------------------------------------------

void write_snapshot_csv(const fs::path& path, const pod::SnapshotMatrix& snapshots, const Provenance& provenance) {
  pod::validate(snapshots);
  auto out = open_out(path);
  out << header_line(provenance) << "\n";
  out << "label";
  for (Eigen::Index j = 0; j < snapshots.cols(); ++j) {
    out << "," << quote(snapshots.member_ids.empty() ? "m" + std::to_string(j) : snapshots.member_ids[j]);
  }
  out << "\n";
  for (Eigen::Index i = 0; i < snapshots.rows(); ++i) {
    out << quote(snapshots.row_labels.empty() ? "r" + std::to_string(i) : snapshots.row_labels[i]);
    for (Eigen::Index j = 0; j < snapshots.cols(); ++j) out << "," << fmt(snapshots.data(i, j));
    out << "\n";
  }
  if (!out) throw ValidationError("failed writing " + path.string());
}

pod::SnapshotMatrix read_snapshot_csv(const fs::path& path) {
  const auto lines = data_lines(path);
  if (lines.size() < 2) throw ValidationError(path.string() + ": snapshot CSV needs a header row and data rows");
  pod::SnapshotMatrix s;
  const auto header = split_csv(lines[0].second);
  if (header.size() < 2) throw ValidationError(path.string() + ": snapshot CSV has no member columns");
  s.member_ids.assign(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(s.member_ids.size());
  s.data.resize(static_cast<Eigen::Index>(lines.size() - 1), n);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_csv(lines[r].second);
    if (static_cast<Eigen::Index>(fields.size()) != n + 1) {
      throw ValidationError(path.string() + ": line " + std::to_string(lines[r].first) + " has " +
                            std::to_string(fields.size()) + " fields, expected " + std::to_string(n + 1));
    }
    s.row_labels.push_back(fields[0]);
    for (Eigen::Index j = 0; j < n; ++j) {
      s.data(static_cast<Eigen::Index>(r - 1), j) = cell(fields[j + 1], path, lines[r].first, j + 1);
    }
  }
  pod::validate(s);
  return s;
}

void write_matrix_csv(const fs::path& path, const MatrixXd& m, const Provenance& provenance,
                      const std::vector<std::string>& columns, const std::vector<std::string>& comments) {
  auto out = open_out(path);
  out << header_line(provenance) << "\n";
  for (const auto& c : comments) out << "# " << c << "\n";
  if (!columns.empty()) {
    if (static_cast<Eigen::Index>(columns.size()) != m.cols()) throw ValidationError("column name count mismatch");
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << quote(columns[j]);
    out << "\n";
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt(m(i, j));
    out << "\n";
  }
  if (!out) throw ValidationError("failed writing " + path.string());
}

MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* columns) {
  const auto lines = data_lines(path);
  if (lines.empty()) throw ValidationError(path.string() + ": no data rows");
  std::size_t first = 0;
  auto head = split_csv(lines[0].second);
  double probe = 0.0;
  if (!parse_double(head[0], probe)) {
    if (columns) *columns = head;
    first = 1;
  }
  if (first >= lines.size()) throw ValidationError(path.string() + ": no data rows");
  const auto width = split_csv(lines[first].second).size();
  MatrixXd m(static_cast<Eigen::Index>(lines.size() - first), static_cast<Eigen::Index>(width));
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto fields = split_csv(lines[r].second);
    if (fields.size() != width) {
      throw ValidationError(path.string() + ": line " + std::to_string(lines[r].first) + " has " +
                            std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    for (std::size_t j = 0; j < width; ++j) {
      m(static_cast<Eigen::Index>(r - first), static_cast<Eigen::Index>(j)) = cell(fields[j], path, lines[r].first, j);
    }
  }
  return m;
}

VectorXd read_vector_csv(const fs::path& path) {
  const MatrixXd m = read_matrix_csv(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw ValidationError(path.string() + ": expected a single row or column of values");
}

void write_covariance_csv(const fs::path& path, const surrogate::ErrorCovariance& cov, const Provenance& provenance) {
  std::vector<std::string> comments{"kind=" + surrogate::to_string(cov.kind)};
  if (!cov.floored_modes.empty()) {
    std::string modes;
    for (int k : cov.floored_modes) modes += (modes.empty() ? "" : " ") + std::to_string(k);
    comments.push_back("floored_modes=" + modes);
  }
  write_matrix_csv(path, cov.matrix, provenance, {}, comments);
}

surrogate::ErrorCovariance read_covariance_csv(const fs::path& path) {
  std::vector<std::string> comments;
  data_lines(path, &comments);
  surrogate::ErrorCovariance cov;
  bool have_kind = false;
  for (const auto& c : comments) {
    const auto pos = c.find("kind=");
    if (pos != std::string::npos && c.find("floored") == std::string::npos) {
      cov.kind = surrogate::covariance_kind_from_string(c.substr(pos + 5));
      have_kind = true;
    }
  }
  if (!have_kind) throw ValidationError(path.string() + ": covariance file lacks a kind tag");
  cov.matrix = read_matrix_csv(path);
  if (cov.matrix.rows() != cov.matrix.cols()) throw ValidationError(path.string() + ": covariance is not square");
  return cov;
}

// --- Structured documents ----------------------------------------------------

void save_json(const fs::path& path, const json& doc, const Provenance& provenance) {
  auto out = open_out(path);
  out << header_line(provenance, "//") << "\n" << doc.dump(2) << "\n";
  if (!out) throw ValidationError("failed writing " + path.string());
}

json load_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void check_format(const json& doc, const std::string& format, int version) {
  if (!doc.is_object() || !doc.contains("format") || !doc.contains("version")) {
    throw ValidationError("document lacks format/version fields (expected " + format + ")");
  }
  const auto found = doc.at("format").get<std::string>();
  if (found != format) throw ValidationError("document format is " + found + ", expected " + format);
  const auto v = doc.at("version");
  if (!v.is_number_integer() || v.get<int>() != version) {
    throw ValidationError(format + " version " + v.dump() + " is not supported (expected version " +
                          std::to_string(version) + ")");
  }
}

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double get_num(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

json matrix_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(num(m(i, j)));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("matrix entry count does not match its shape");
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = get_num(data[static_cast<std::size_t>(i * cols + k)]);
  }
  return m;
}

json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

VectorXd vector_from(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = get_num(j[i]);
  return v;
}

template <typename Fn>
auto guarded(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ValidationError("malformed " + what + " document: " + e.what());
  }
}

json standardizer_json(const surrogate::Standardizer& s) {
  return json{{"mean", vector_json(s.mean)}, {"scale", vector_json(s.scale)},
              {"constant_components", s.constant_components}};
}

surrogate::Standardizer standardizer_from(const json& j) {
  surrogate::Standardizer s;
  s.mean = vector_from(j.at("mean"));
  s.scale = vector_from(j.at("scale"));
  s.constant_components = j.at("constant_components").get<std::vector<int>>();
  if (s.mean.size() != s.scale.size()) throw ValidationError("standardizer mean and scale lengths differ");
  return s;
}

}  // namespace

json to_json(const pod::PodBasis& basis) {
  return json{{"format", "surroda.pod_basis"},
              {"version", 1},
              {"retained", basis.retained()},
              {"mean", vector_json(basis.mean())},
              {"singular_values", vector_json(basis.singular_values())},
              {"modes", matrix_json(basis.modes())},
              {"coefficients", matrix_json(basis.coefficients())}};
}

pod::PodBasis pod_basis_from_json(const json& doc) {
  check_format(doc, "surroda.pod_basis", 1);
  return guarded("POD basis", [&] {
    return pod::PodBasis(vector_from(doc.at("mean")), matrix_from(doc.at("modes")),
                         vector_from(doc.at("singular_values")), matrix_from(doc.at("coefficients")),
                         doc.at("retained").get<int>());
  });
}

json to_json(const pce::PceModel& model) {
  json marginals = json::array();
  for (const auto& m : model.marginals()) {
    marginals.push_back(json{{"family", pce::to_string(m.family)}, {"a", m.a}, {"b", m.b}});
  }
  json indices = json::array();
  for (const auto& a : model.indices()) indices.push_back(a.exponents);
  return json{{"format", "surroda.pce_model"},
              {"version", 1},
              {"input_dim", model.input_dim()},
              {"max_degree", model.max_degree()},
              {"marginals", marginals},
              {"indices", indices},
              {"coefficients", matrix_json(model.coefficients())},
              {"mode_degrees", model.mode_degrees()},
              {"empirical_errors", vector_json(model.empirical_errors())},
              {"validation_bias", vector_json(model.validation_bias())}};
}

pce::PceModel pce_model_from_json(const json& doc) {
  check_format(doc, "surroda.pce_model", 1);
  return guarded("PCE model", [&] {
    std::vector<pce::InputMarginal> marginals;
    for (const auto& m : doc.at("marginals")) {
      marginals.push_back({pce::family_from_string(m.at("family").get<std::string>()), m.at("a").get<double>(),
                           m.at("b").get<double>()});
    }
    if (static_cast<int>(marginals.size()) != doc.at("input_dim").get<int>()) {
      throw ValidationError("PCE input_dim does not match the marginals");
    }
    pce::PceModel model(std::move(marginals), doc.at("max_degree").get<int>(), matrix_from(doc.at("coefficients")),
                        doc.at("mode_degrees").get<std::vector<int>>(), vector_from(doc.at("empirical_errors")),
                        vector_from(doc.at("validation_bias")));
    const auto& stored = doc.at("indices");
    if (stored.size() != model.indices().size()) throw ValidationError("PCE index list length mismatch");
    for (std::size_t t = 0; t < stored.size(); ++t) {
      if (stored[t].get<std::vector<int>>() != model.indices()[t].exponents) {
        throw ValidationError("PCE index list is not in graded-lexicographic order");
      }
    }
    return model;
  });
}

json to_json(const surrogate::PodPceSurrogate& s) {
  json bounds = json::array();
  for (const auto& b : s.bounds) bounds.push_back({b.lower, b.upper});
  return json{{"format", "surroda.podpce_surrogate"},
              {"version", 1},
              {"ensemble_size", s.ensemble_size},
              {"bounds", bounds},
              {"train_members", s.train_members},
              {"validation_members", s.validation_members},
              {"state_basis", to_json(s.state_basis)},
              {"pce", to_json(s.pce)}};
}

surrogate::PodPceSurrogate podpce_from_json(const json& doc) {
  check_format(doc, "surroda.podpce_surrogate", 1);
  return guarded("POD-PCE surrogate", [&] {
    surrogate::PodPceSurrogate s;
    s.ensemble_size = doc.at("ensemble_size").get<int>();
    for (const auto& b : doc.at("bounds")) s.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    s.train_members = doc.at("train_members").get<std::vector<int>>();
    s.validation_members = doc.at("validation_members").get<std::vector<int>>();
    s.state_basis = pod_basis_from_json(doc.at("state_basis"));
    s.pce = pce_model_from_json(doc.at("pce"));
    if (s.pce.output_dim() != s.state_basis.retained()) {
      throw ValidationError("PCE output dimension does not match the retained POD rank");
    }
    return s;
  });
}

json to_json(const surrogate::PodEnSurrogate& s) {
  return json{{"format", "surroda.poden_surrogate"},
              {"version", 1},
              {"param_dim", s.param_dim},
              {"x_standardizer", standardizer_json(s.x_standardizer)},
              {"y_standardizer", standardizer_json(s.y_standardizer)},
              {"joint", to_json(s.joint)}};
}

surrogate::PodEnSurrogate poden_from_json(const json& doc) {
  check_format(doc, "surroda.poden_surrogate", 1);
  return guarded("PODEn surrogate", [&] {
    surrogate::PodEnSurrogate s;
    s.param_dim = doc.at("param_dim").get<int>();
    s.x_standardizer = standardizer_from(doc.at("x_standardizer"));
    s.y_standardizer = standardizer_from(doc.at("y_standardizer"));
    s.joint = pod_basis_from_json(doc.at("joint"));
    if (s.x_standardizer.dim() != s.param_dim || s.y_standardizer.dim() != s.state_dim()) {
      throw ValidationError("PODEn standardizers do not match the joint basis");
    }
    return s;
  });
}

bool is_podpce_document(const json& doc) {
  return doc.is_object() && doc.value("format", std::string()) == "surroda.podpce_surrogate";
}

json to_json(const assimilate::AnalysisResult& result, const std::vector<std::string>& parameter_names,
             const VectorXd& prior_std) {
  json x = json::object();
  json z = json::object();
  for (Eigen::Index i = 0; i < result.x_a.size(); ++i) {
    const std::string name = i < static_cast<Eigen::Index>(parameter_names.size()) ? parameter_names[i]
                                                                                   : "x" + std::to_string(i);
    x[name] = num(result.x_a(i));
    if (i < prior_std.size()) z[name] = num(result.x_a(i) / prior_std(i));
  }
  json trace = json::array();
  for (const auto& t : result.cost_trace) trace.push_back({num(t.cost), num(t.projected_gradient)});
  return json{{"format", "surroda.analysis"},
              {"version", 1},
              {"x_a", x},
              {"x_a_over_prior_std", z},
              {"nu_a", vector_json(result.nu_a)},
              {"cost", num(result.cost)},
              {"cost_trace", trace},
              {"iterations", result.iterations},
              {"evaluations", result.evaluations},
              {"converged", result.converged},
              {"reason", result.reason},
              {"clipped", result.clipped}};
}

toymodel::ToyGrid grid_from_json(const json& doc) {
  check_format(doc, "surroda.toymodel", 1);
  return guarded("toy model", [&] {
    static const std::set<std::string> allowed{"format", "version", "name", "time_step_min", "time_count",
                                               "gravity", "drag_time_s", "min_depth_m", "cross_ratio",
                                               "stations", "harmonics"};
    for (const auto& [key, _] : doc.items()) {
      if (!allowed.count(key)) throw ValidationError("unknown toy model key '" + key + "'");
    }
    toymodel::ToyGrid g;
    g.version = doc.at("name").get<std::string>();
    const double step = doc.at("time_step_min").get<double>();
    const int count = doc.at("time_count").get<int>();
    for (int j = 0; j < count; ++j) g.times_h.push_back(j * step / 60.0);
    g.gravity = doc.at("gravity").get<double>();
    g.drag_time = doc.at("drag_time_s").get<double>();
    g.min_depth = doc.at("min_depth_m").get<double>();
    g.cross_ratio = doc.at("cross_ratio").get<double>();
    for (const auto& s : doc.at("stations")) {
      g.stations.push_back({s.at("id").get<std::string>(), s.at("depth_offset_m").get<double>(),
                            s.at("phase_lag_rad").get<double>()});
    }
    for (const auto& h : doc.at("harmonics")) {
      g.harmonics.push_back({h.at("period_h").get<double>(), h.at("amplitude_m").get<double>(),
                             h.at("phase_rad").get<double>(), h.at("velocity_ms").get<double>(),
                             h.at("velocity_phase_rad").get<double>()});
    }
    g.validate();
    return g;
  });
}

json to_json(const toymodel::ToyGrid& grid) {
  json stations = json::array();
  for (const auto& s : grid.stations) {
    stations.push_back({{"id", s.id}, {"depth_offset_m", s.depth_offset}, {"phase_lag_rad", s.phase_lag}});
  }
  json harmonics = json::array();
  for (const auto& h : grid.harmonics) {
    harmonics.push_back({{"period_h", h.period_h},
                         {"amplitude_m", h.amplitude},
                         {"phase_rad", h.phase},
                         {"velocity_ms", h.velocity},
                         {"velocity_phase_rad", h.velocity_phase}});
  }
  const double step = grid.times_h.size() > 1 ? (grid.times_h[1] - grid.times_h[0]) * 60.0 : 20.0;
  return json{{"format", "surroda.toymodel"}, {"version", 1},          {"name", grid.version},
              {"time_step_min", step},        {"time_count", grid.time_count()},
              {"gravity", grid.gravity},      {"drag_time_s", grid.drag_time},
              {"min_depth_m", grid.min_depth}, {"cross_ratio", grid.cross_ratio},
              {"stations", stations},         {"harmonics", harmonics}};
}

// --- Reports -----------------------------------------------------------------

std::vector<std::string> report_columns() {
  std::vector<std::string> cols{"experiment", "surrogate", "covariance", "d", "d_from_evr", "evr", "n", "noise",
                                "alpha_B", "alpha_R", "replicate", "rmse_truth", "rmse_obs", "rel_rmse_truth",
                                "rel_rmse_obs", "rmse_background", "rmse_surrogate", "param_error",
                                "rmse_u", "rmse_v", "rmse_eta"};
  for (int p = 1; p <= 5; ++p) cols.push_back("rmse_P" + std::to_string(p));
  for (const auto& name : toymodel::parameter_names()) cols.push_back("x_" + name);
  for (const char* c : {"cost", "forward_calls", "surrogate_calls", "iterations", "converged", "reason", "error"}) {
    cols.push_back(c);
  }
  return cols;
}

void write_report_csv(const fs::path& path, const experiments::ExperimentReport& report, const Provenance& provenance) {
  auto out = open_out(path);
  out << header_line(provenance) << "\n";
  const auto cols = report_columns();
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j];
  out << "\n";
  const auto pad = [](const std::vector<double>& v, std::size_t n) {
    std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < std::min(n, v.size()); ++i) out[i] = v[i];
    return out;
  };
  for (const auto& r : report.rows) {
    out << quote(r.experiment) << "," << r.surrogate << "," << r.covariance << "," << r.d << ","
        << (r.d_from_evr ? 1 : 0) << "," << fmt(r.evr) << "," << r.n << "," << fmt(r.noise) << "," << fmt(r.alpha_B)
        << "," << fmt(r.alpha_R) << "," << r.replicate << "," << fmt(r.rmse_truth) << "," << fmt(r.rmse_obs) << ","
        << fmt(r.rel_rmse_truth) << "," << fmt(r.rel_rmse_obs) << "," << fmt(r.rmse_background) << ","
        << fmt(r.rmse_surrogate) << "," << fmt(r.param_error);
    for (double v : pad(r.rmse_by_variable, 3)) out << "," << fmt(v);
    for (double v : pad(r.rmse_by_station, 5)) out << "," << fmt(v);
    for (int i = 0; i < toymodel::kParamCount; ++i) {
      out << "," << fmt(i < r.x_a.size() ? r.x_a(i) : std::numeric_limits<double>::quiet_NaN());
    }
    out << "," << fmt(r.cost) << "," << r.forward_calls << "," << r.surrogate_calls << "," << r.iterations << ","
        << (r.converged ? 1 : 0) << "," << quote(r.reason) << "," << quote(r.error) << "\n";
  }
  if (!out) throw ValidationError("failed writing " + path.string());
}

void write_timings_csv(const fs::path& path, const experiments::ExperimentReport& report, const Provenance& provenance) {
  auto out = open_out(path);
  out << header_line(provenance) << "\n";
  out << "row,surrogate,covariance,d,n,noise,alpha_B,alpha_R,replicate,wall_seconds\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    out << i << "," << r.surrogate << "," << r.covariance << "," << r.d << "," << r.n << "," << fmt(r.noise) << ","
        << fmt(r.alpha_B) << "," << fmt(r.alpha_R) << "," << r.replicate << "," << fmt(r.wall_seconds) << "\n";
  }
}

json report_summary(const experiments::ExperimentReport& report) {
  int failed = 0;
  const experiments::ReportRow* best = nullptr;
  for (const auto& r : report.rows) {
    if (!r.error.empty()) {
      ++failed;
      continue;
    }
    const double key = std::isfinite(r.rmse_truth) ? r.rmse_truth : r.rmse_obs;
    const double best_key = best ? (std::isfinite(best->rmse_truth) ? best->rmse_truth : best->rmse_obs) : 0.0;
    if (!best || key < best_key) best = &r;
  }
  json j{{"format", "surroda.report_summary"},
         {"version", 1},
         {"experiment", report.experiment},
         {"seed", report.seed},
         {"x_true", vector_json(report.x_true)},
         {"cells", report.rows.size()},
         {"failed_cells", failed},
         {"notes", report.notes}};
  if (best) {
    j["best_cell"] = {{"surrogate", best->surrogate}, {"covariance", best->covariance}, {"d", best->d},
                      {"n", best->n},                 {"noise", best->noise},           {"alpha_B", best->alpha_B},
                      {"alpha_R", best->alpha_R},     {"rmse_truth", num(best->rmse_truth)},
                      {"rmse_obs", num(best->rmse_obs)}, {"x_a", vector_json(best->x_a)}};
  }
  return j;
}

// --- Run configuration ---------------------------------------------------------

namespace {

class Section {
 public:
  Section(const json& j, std::string name, std::set<std::string> allowed) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw ValidationError("configuration section '" + name_ + "' must be an object");
    for (const auto& [key, _] : j.items()) {
      if (!allowed.count(key)) throw ValidationError("unknown configuration key '" + key + "' in section '" + name_ + "'");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& at(const std::string& key) const { return j_.at(key); }

  template <typename T>
  void read(const std::string& key, T& target) const {
    if (!has(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("configuration key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& target) const {
    if (!has(key)) return;
    T value{};
    read(key, value);
    target = value;
  }

 private:
  const json& j_;
  std::string name_;
};

fs::path resolve_input(const RunConfig& c, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  RunConfig c;
  c.base_dir = base_dir;
  const Section top(doc, "root",
                    {"schema_version", "seed", "workers", "toymodel", "sampling", "surrogate", "problem", "optimizer",
                     "sweep", "measurement", "inputs", "description"});
  if (!top.has("schema_version")) throw ValidationError("configuration lacks schema_version");
  int schema = 0;
  top.read("schema_version", schema);
  if (schema != kConfigSchemaVersion) {
    throw ValidationError("configuration schema_version " + std::to_string(schema) + " is not supported (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
  }
  top.read("seed", c.seed);
  top.read("workers", c.workers);
  top.read("toymodel", c.toymodel);

  if (top.has("sampling")) {
    const Section s(top.at("sampling"), "sampling", {"n"});
    s.read("n", c.sample_size);
  }
  if (top.has("surrogate")) {
    const Section s(top.at("surrogate"), "surrogate", {"kind", "criterion", "pce"});
    s.read("kind", c.surrogate_kind);
    if (s.has("criterion")) {
      const Section cr(s.at("criterion"), "surrogate.criterion", {"evr", "modes"});
      if (cr.has("evr") == cr.has("modes")) {
        throw ValidationError("surrogate.criterion needs exactly one of 'evr' or 'modes'");
      }
      c.evr_threshold.reset();
      cr.read("evr", c.evr_threshold);
      cr.read("modes", c.modes);
    }
    if (s.has("pce")) {
      const Section p(s.at("pce"), "surrogate.pce", {"max_degree", "train_fraction", "patience"});
      p.read("max_degree", c.pce_max_degree);
      p.read("train_fraction", c.pce_train_fraction);
      p.read("patience", c.lars_patience);
    }
  }
  if (top.has("problem")) {
    const Section s(top.at("problem"), "problem",
                    {"noise_level", "covariance", "alpha_B", "alpha_R", "b_from_truth", "x_true"});
    s.read("noise_level", c.noise_level);
    s.read("covariance", c.covariance);
    s.read("alpha_B", c.alpha_B);
    s.read("alpha_R", c.alpha_R);
    s.read("b_from_truth", c.b_from_truth);
    s.read("x_true", c.x_true);
  }
  if (top.has("optimizer")) {
    const Section s(top.at("optimizer"), "optimizer", {"tol", "max_iter", "memory", "rel_decrease"});
    s.read("tol", c.optimizer.tol);
    s.read("max_iter", c.optimizer.max_iter);
    s.read("memory", c.optimizer.memory);
    s.read("rel_decrease", c.optimizer.rel_decrease);
  }
  if (top.has("sweep")) {
    const Section s(top.at("sweep"), "sweep",
                    {"noise_levels", "training_sizes", "mode_numbers", "include_evr", "surrogates", "covariances",
                     "alpha_grid", "alphas", "replicates"});
    s.read("noise_levels", c.noise_levels);
    s.read("training_sizes", c.training_sizes);
    s.read("mode_numbers", c.mode_numbers);
    s.read("include_evr", c.include_evr);
    s.read("surrogates", c.surrogates);
    s.read("covariances", c.covariances);
    s.read("alpha_grid", c.alpha_grid);
    if (s.has("alphas")) {
      c.alphas.clear();
      std::vector<std::vector<double>> pairs;
      s.read("alphas", pairs);
      for (const auto& p : pairs) {
        if (p.size() != 2) throw ValidationError("sweep.alphas entries must be [alpha_B, alpha_R] pairs");
        c.alphas.emplace_back(p[0], p[1]);
      }
    }
    s.read("replicates", c.replicates);
  }
  if (top.has("measurement")) {
    const Section s(top.at("measurement"), "measurement",
                    {"observations", "hidden_params", "obs_error_level", "include_poden", "fd_relative_step"});
    s.read("observations", c.observations_file);
    s.read("hidden_params", c.hidden_params);
    s.read("obs_error_level", c.obs_error_level);
    s.read("include_poden", c.include_poden);
    s.read("fd_relative_step", c.fd_relative_step);
  }
  if (top.has("inputs")) {
    const Section s(top.at("inputs"), "inputs", {"params", "snapshots", "surrogate", "observations"});
    s.read("params", c.params_file);
    s.read("snapshots", c.snapshots_file);
    s.read("surrogate", c.surrogate_file);
    if (s.has("observations")) s.read("observations", c.observations_file);
  }

  if (c.workers < 1) throw ValidationError("workers must be at least 1");
  if (c.sample_size < 2) throw ValidationError("sampling.n must be at least 2");
  if (c.surrogate_kind != "podpce" && c.surrogate_kind != "poden") {
    throw ValidationError("surrogate.kind must be podpce or poden");
  }
  if (c.evr_threshold && !(*c.evr_threshold > 0.0 && *c.evr_threshold <= 1.0)) {
    throw ValidationError("surrogate.criterion.evr must lie in (0, 1]");
  }
  if (c.modes && *c.modes < 1) throw ValidationError("surrogate.criterion.modes must be positive");
  if (c.pce_max_degree < 0) throw ValidationError("surrogate.pce.max_degree must be nonnegative");
  if (c.lars_patience < 0) throw ValidationError("surrogate.pce.patience must be nonnegative");
  if (!(c.noise_level > 0.0) || !(c.noise_level < 1.0)) {
    throw ValidationError("problem.noise_level must lie in (0, 1): observation covariance must be positive definite");
  }
  surrogate::covariance_kind_from_string(c.covariance);
  for (const auto& k : c.covariances) surrogate::covariance_kind_from_string(k);
  for (const auto& k : c.surrogates) experiments::surrogate_kind_from_string(k);
  if (!(c.alpha_B > 0.0) || !(c.alpha_R > 0.0)) throw ValidationError("problem.alpha_B and alpha_R must be positive");
  if (c.replicates < 1) throw ValidationError("sweep.replicates must be at least 1");
  return c;
}

json to_json(const RunConfig& c) {
  json criterion = c.modes ? json{{"modes", *c.modes}} : json{{"evr", c.evr_threshold.value_or(0.95)}};
  json alphas = json::array();
  for (const auto& [b, r] : c.alphas) alphas.push_back({b, r});
  json measurement{{"obs_error_level", c.obs_error_level},
                   {"include_poden", c.include_poden},
                   {"fd_relative_step", c.fd_relative_step}};
  if (c.observations_file) measurement["observations"] = *c.observations_file;
  if (c.hidden_params) measurement["hidden_params"] = *c.hidden_params;
  json problem{{"noise_level", c.noise_level},
               {"covariance", c.covariance},
               {"alpha_B", c.alpha_B},
               {"alpha_R", c.alpha_R},
               {"b_from_truth", c.b_from_truth}};
  if (c.x_true) problem["x_true"] = *c.x_true;
  json inputs = json::object();
  if (c.params_file) inputs["params"] = *c.params_file;
  if (c.snapshots_file) inputs["snapshots"] = *c.snapshots_file;
  if (c.surrogate_file) inputs["surrogate"] = *c.surrogate_file;
  return json{{"schema_version", kConfigSchemaVersion},
              {"seed", c.seed},
              {"workers", c.workers},
              {"toymodel", c.toymodel},
              {"sampling", {{"n", c.sample_size}}},
              {"surrogate",
               {{"kind", c.surrogate_kind},
                {"criterion", criterion},
                {"pce",
                 {{"max_degree", c.pce_max_degree},
                  {"train_fraction", c.pce_train_fraction},
                  {"patience", c.lars_patience}}}}},
              {"problem", problem},
              {"optimizer",
               {{"tol", c.optimizer.tol},
                {"max_iter", c.optimizer.max_iter},
                {"memory", c.optimizer.memory},
                {"rel_decrease", c.optimizer.rel_decrease}}},
              {"sweep",
               {{"noise_levels", c.noise_levels},
                {"training_sizes", c.training_sizes},
                {"mode_numbers", c.mode_numbers},
                {"include_evr", c.include_evr},
                {"surrogates", c.surrogates},
                {"covariances", c.covariances},
                {"alpha_grid", c.alpha_grid},
                {"alphas", alphas},
                {"replicates", c.replicates}}},
              {"measurement", measurement},
              {"inputs", inputs}};
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a(to_json(config).dump()); }

fs::path config_directory() {
  if (const char* env = std::getenv("SURRODA_CONFIG_DIR"); env && *env) return env;
  return SURRODA_CONFIG_DIR;
}

fs::path resolve_config(const std::string& name_or_path) {
  const fs::path direct(name_or_path);
  if (fs::is_regular_file(direct)) return direct;
  fs::path named = config_directory() / name_or_path;
  if (named.extension() != ".json") named += ".json";
  if (fs::is_regular_file(named)) return named;
  throw ValidationError("configuration '" + name_or_path + "' is neither a file nor a named default in " +
                        config_directory().string());
}

toymodel::ToyGrid load_grid(const RunConfig& config) {
  if (config.toymodel.empty()) return toymodel::default_grid();
  return grid_from_json(load_json(resolve_config(config.toymodel)));
}

surrogate::PodPceConfig podpce_config(const RunConfig& c) {
  surrogate::PodPceConfig p;
  p.degree.max_degree = c.pce_max_degree;
  p.degree.lars.patience = c.lars_patience;
  p.train_fraction = c.pce_train_fraction;
  return p;
}

pod::TruncationCriterion truncation_criterion(const RunConfig& c) {
  if (c.modes) return pod::KeepModes{*c.modes};
  return pod::EvrThreshold{c.evr_threshold.value_or(0.95)};
}

experiments::TwinConfig twin_config(const RunConfig& c, const toymodel::ToyGrid& grid) {
  experiments::TwinConfig t;
  t.seed = c.seed;
  if (c.x_true) t.x_true = Eigen::Map<const VectorXd>(c.x_true->data(), static_cast<Eigen::Index>(c.x_true->size()));
  t.noise_levels = c.noise_levels;
  t.training_sizes = c.training_sizes;
  t.mode_numbers = c.mode_numbers;
  t.include_evr = c.include_evr;
  t.evr_threshold = c.evr_threshold.value_or(0.95);
  t.surrogates.clear();
  for (const auto& s : c.surrogates) t.surrogates.push_back(experiments::surrogate_kind_from_string(s));
  t.covariances.clear();
  for (const auto& k : c.covariances) t.covariances.push_back(surrogate::covariance_kind_from_string(k));
  t.alphas = c.alpha_grid ? experiments::default_alpha_grid() : c.alphas;
  t.background = c.b_from_truth ? experiments::BackgroundKind::FromTruth : experiments::BackgroundKind::TableStd;
  t.pce = podpce_config(c);
  t.optimizer = c.optimizer;
  t.workers = c.workers;
  t.grid = grid;
  return t;
}

experiments::MeasurementConfig measurement_config(const RunConfig& c, const toymodel::ToyGrid& grid) {
  experiments::MeasurementConfig m;
  m.seed = c.seed;
  if (c.observations_file) m.observations = read_vector_csv(resolve_input(c, *c.observations_file));
  if (c.hidden_params) {
    m.hidden_params = Eigen::Map<const VectorXd>(c.hidden_params->data(), static_cast<Eigen::Index>(c.hidden_params->size()));
  }
  m.obs_error_level = c.obs_error_level;
  m.training_sizes = c.training_sizes;
  m.mode_numbers = c.mode_numbers;
  m.include_evr = c.include_evr;
  m.evr_threshold = c.evr_threshold.value_or(0.95);
  m.include_poden = c.include_poden;
  m.covariances.clear();
  for (const auto& k : c.covariances) m.covariances.push_back(surrogate::covariance_kind_from_string(k));
  m.pce = podpce_config(c);
  m.optimizer = c.optimizer;
  m.fd.relative_step = c.fd_relative_step;
  m.workers = c.workers;
  m.grid = grid;
  return m;
}

}  // namespace surroda::io
