/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

#include "surroda/common.hpp"

namespace surroda::toymodel {

/// One tidal constituent: surface elevation and velocity amplitudes with phases.
struct Harmonic {
  double period_h = 0.0;
  double amplitude = 0.0;       ///< m
  double phase = 0.0;           ///< rad
  double velocity = 0.0;        ///< m/s
  double velocity_phase = 0.0;  ///< rad
};

struct Station {
  std::string id;
  double depth_offset = 0.0;  ///< m, added to MTL to form the still-water depth
  double phase_lag = 0.0;     ///< rad
};

/// Frozen constants of the point emulator.
struct ToyGrid {
  std::string version;
  std::vector<Station> stations;
  std::vector<double> times_h;  ///< strictly increasing
  std::vector<Harmonic> harmonics;
  double gravity = 9.81;
  double drag_time = 1000.0;  ///< s
  double min_depth = 0.1;     ///< m
  double cross_ratio = 0.4;   ///< v amplitude relative to u

  int station_count() const { return static_cast<int>(stations.size()); }
  int time_count() const { return static_cast<int>(times_h.size()); }
  int state_dim() const { return 3 * station_count() * time_count(); }

  /// Throws ValidationError when times are not increasing or depths not positive.
  void validate() const;
};

/// Five stations, 38 instants every 20 minutes, three constituents.
ToyGrid default_grid();

inline constexpr int kParamCount = 4;

/// Calibration parameters, ordered K2, MTL, CTL, CTV everywhere.
struct TidalParams {
  double K2 = 0.0;   ///< Strickler coefficient, m^(1/3)/s
  double MTL = 0.0;  ///< mean tidal level, m
  double CTL = 0.0;  ///< tidal-level coefficient
  double CTV = 0.0;  ///< tidal-velocity coefficient

  VectorXd to_vector() const;
  static TidalParams from_vector(const VectorXd& x);
};

const std::vector<std::string>& parameter_names();
/// Uniform prior bounds of each parameter.
std::vector<Interval> parameter_bounds();
/// Prior means and standard deviations from the parameter table.
VectorXd table_means();
VectorXd table_stds();

enum class Variable { U = 0, V = 1, Eta = 2 };
std::string variable_name(Variable v);

/// Flat index of (variable, station, time) in a state vector.
int state_index(const ToyGrid& grid, Variable variable, int station, int time);

struct StateLocation {
  Variable variable;
  int station;
  int time;
};
StateLocation locate(const ToyGrid& grid, int index);

/// Labels like "u/P1/t00" for each state component.
std::vector<std::string> state_labels(const ToyGrid& grid);

/// Station time series of u, v and surface elevation.
///
/// `check_bounds = false` admits probes outside the prior box (CTL = 0 and
/// similar); it is meant for tests.
VectorXd simulate(const TidalParams& params, const ToyGrid& grid, bool check_bounds = true);
VectorXd simulate(const VectorXd& x, const ToyGrid& grid, bool check_bounds = true);

/// Runs every row of `params` (n x 4); returns states as columns (m_y x n).
MatrixXd simulate_ensemble(const MatrixXd& params, const ToyGrid& grid, int workers = 1);

/// n x 4 i.i.d. uniform draws within `bounds` from a named stream.
/// Draws are row-major, so a larger n extends a smaller one.
MatrixXd sample_parameters(const std::vector<Interval>& bounds, int n, std::uint64_t seed,
                           std::string_view stream = "sampling");

}  // namespace surroda::toymodel
