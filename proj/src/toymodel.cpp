/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#include "surroda/toymodel.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace surroda::toymodel {

void ToyGrid::validate() const {
  if (stations.empty()) throw ValidationError("toy grid has no stations");
  if (times_h.empty()) throw ValidationError("toy grid has no time samples");
  if (harmonics.empty()) throw ValidationError("toy grid has no harmonic constituents");
  for (std::size_t t = 1; t < times_h.size(); ++t) {
    if (!(times_h[t] > times_h[t - 1])) throw ValidationError("toy grid times must be strictly increasing");
  }
  for (const auto& s : stations) {
    if (!(s.depth_offset > 0.0)) throw ValidationError("station " + s.id + " depth must be positive");
  }
  for (const auto& h : harmonics) {
    if (!(h.period_h > 0.0)) throw ValidationError("harmonic periods must be positive");
  }
  if (!(gravity > 0.0) || !(drag_time > 0.0) || !(min_depth > 0.0)) {
    throw ValidationError("toy grid physical constants must be positive");
  }
}

ToyGrid default_grid() {
  ToyGrid grid;
  grid.version = "toymodel_v1";
  const double depths[] = {8.0, 10.0, 12.0, 9.0, 11.0};
  for (int p = 0; p < 5; ++p) {
    grid.stations.push_back({"P" + std::to_string(p + 1), depths[p], 0.05 * p});
  }
  for (int j = 0; j < 38; ++j) grid.times_h.push_back(j * 20.0 / 60.0);
  const double periods[] = {12.42, 12.00, 12.66};
  const double amplitudes[] = {2.5, 0.8, 0.5};
  const double velocities[] = {0.8, 0.25, 0.15};
  const double phases[] = {0.0, 0.5, 1.0};
  for (int i = 0; i < 3; ++i) {
    grid.harmonics.push_back({periods[i], amplitudes[i], phases[i], velocities[i], phases[i] + 0.3});
  }
  return grid;
}

VectorXd TidalParams::to_vector() const {
  VectorXd x(kParamCount);
  x << K2, MTL, CTL, CTV;
  return x;
}

TidalParams TidalParams::from_vector(const VectorXd& x) {
  if (x.size() != kParamCount) {
    throw ValidationError("expected " + std::to_string(kParamCount) + " parameters, got " +
                          std::to_string(x.size()));
  }
  return {x(0), x(1), x(2), x(3)};
}

const std::vector<std::string>& parameter_names() {
  static const std::vector<std::string> names{"K2", "MTL", "CTL", "CTV"};
  return names;
}

std::vector<Interval> parameter_bounds() { return {{21.02, 90.66}, {4.0, 6.0}, {0.8, 1.3}, {0.8, 3.0}}; }

VectorXd table_means() {
  VectorXd m(kParamCount);
  m << 55.84, 5.0, 1.05, 1.9;
  return m;
}

VectorXd table_stds() {
  VectorXd s(kParamCount);
  s << 34.82, 1.0, 0.25, 1.1;
  return s;
}

std::string variable_name(Variable v) {
  switch (v) {
    case Variable::U: return "u";
    case Variable::V: return "v";
    case Variable::Eta: return "eta";
  }
  return "?";
}

int state_index(const ToyGrid& grid, Variable variable, int station, int time) {
  const int s = grid.station_count();
  const int k = grid.time_count();
  if (station < 0 || station >= s || time < 0 || time >= k) {
    throw ValidationError("state index out of range (station " + std::to_string(station) + ", time " +
                          std::to_string(time) + ")");
  }
  return static_cast<int>(variable) * s * k + station * k + time;
}

StateLocation locate(const ToyGrid& grid, int index) {
  const int s = grid.station_count();
  const int k = grid.time_count();
  if (index < 0 || index >= 3 * s * k) {
    throw ValidationError("state index " + std::to_string(index) + " out of range");
  }
  return {static_cast<Variable>(index / (s * k)), (index / k) % s, index % k};
}

std::vector<std::string> state_labels(const ToyGrid& grid) {
  std::vector<std::string> labels;
  labels.reserve(grid.state_dim());
  char buf[16];
  for (int v = 0; v < 3; ++v) {
    for (const auto& st : grid.stations) {
      for (int t = 0; t < grid.time_count(); ++t) {
        std::snprintf(buf, sizeof buf, "t%02d", t);
        labels.push_back(variable_name(static_cast<Variable>(v)) + "/" + st.id + "/" + buf);
      }
    }
  }
  return labels;
}

VectorXd simulate(const TidalParams& params, const ToyGrid& grid, bool check_bounds) {
  const VectorXd x = params.to_vector();
  if (!x.allFinite()) throw ValidationError("toy model parameters must be finite");
  if (check_bounds) {
    const auto bounds = parameter_bounds();
    for (int i = 0; i < kParamCount; ++i) {
      if (!bounds[i].contains(x(i), 1e-9)) {
        throw ValidationError("parameter " + parameter_names()[i] + " = " + std::to_string(x(i)) +
                              " outside [" + std::to_string(bounds[i].lower) + ", " +
                              std::to_string(bounds[i].upper) + "]");
      }
    }
  }
  if (!(params.K2 > 0.0)) throw ValidationError("Strickler coefficient must be positive");

  const int s = grid.station_count();
  const int k = grid.time_count();
  VectorXd y(grid.state_dim());
  const double two_pi = 2.0 * std::numbers::pi;
  const double half_pi = 0.5 * std::numbers::pi;
  const double friction = grid.gravity * grid.drag_time / (params.K2 * params.K2);
  for (int p = 0; p < s; ++p) {
    const double lag = grid.stations[p].phase_lag;
    for (int t = 0; t < k; ++t) {
      const double time = grid.times_h[t];
      double eta = 0.0, along = 0.0, cross = 0.0;
      for (const auto& h : grid.harmonics) {
        const double omega_t = two_pi * time / h.period_h;
        eta += h.amplitude * std::cos(omega_t - h.phase - lag);
        along += h.velocity * std::cos(omega_t - h.velocity_phase - lag);
        cross += h.velocity * std::cos(omega_t - h.velocity_phase - half_pi - lag);
      }
      along *= params.CTV;
      cross *= params.CTV;
      const double depth =
          std::max(params.MTL + grid.stations[p].depth_offset + params.CTL * eta, grid.min_depth);
      const double cf = friction / std::pow(depth, 4.0 / 3.0);
      y(state_index(grid, Variable::U, p, t)) = along / (1.0 + cf * std::abs(along));
      y(state_index(grid, Variable::V, p, t)) = grid.cross_ratio * cross / (1.0 + cf * std::abs(cross));
      y(state_index(grid, Variable::Eta, p, t)) = params.CTL * eta + params.MTL;
    }
  }
  return y;
}

VectorXd simulate(const VectorXd& x, const ToyGrid& grid, bool check_bounds) {
  return simulate(TidalParams::from_vector(x), grid, check_bounds);
}

MatrixXd simulate_ensemble(const MatrixXd& params, const ToyGrid& grid, int workers) {
  if (params.cols() != kParamCount) {
    throw ValidationError("parameter matrix must have " + std::to_string(kParamCount) + " columns");
  }
  MatrixXd states(grid.state_dim(), params.rows());
  parallel_for(static_cast<std::size_t>(params.rows()), workers, [&](std::size_t j) {
    states.col(static_cast<Eigen::Index>(j)) =
        simulate(VectorXd(params.row(static_cast<Eigen::Index>(j)).transpose()), grid);
  });
  return states;
}

MatrixXd sample_parameters(const std::vector<Interval>& bounds, int n, std::uint64_t seed,
                           std::string_view stream) {
  if (n < 1) throw ValidationError("sample size must be at least 1");
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || !(b.lower < b.upper)) {
      throw ValidationError("parameter bounds must be finite with min < max");
    }
  }
  Rng rng(seed, stream);
  MatrixXd x(n, static_cast<Eigen::Index>(bounds.size()));
  for (int j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      x(j, static_cast<Eigen::Index>(i)) = rng.uniform(bounds[i].lower, bounds[i].upper);
    }
  }
  return x;
}

}  // namespace surroda::toymodel
