#include <doctest.h>

#include "support.hpp"
#include "surroda/toymodel.hpp"

using namespace surroda;
using namespace surroda::toymodel;

namespace {

double max_abs_u(const VectorXd& y, const ToyGrid& g) {
  double m = 0.0;
  for (int p = 0; p < g.station_count(); ++p) {
    for (int t = 0; t < g.time_count(); ++t) m = std::max(m, std::abs(y(state_index(g, Variable::U, p, t))));
  }
  return m;
}

}  // namespace

TEST_CASE("parameter table") {
  // Bounds, means and standard deviations as printed in the parameter table.
  const auto b = parameter_bounds();
  CHECK(b[0].lower == 21.02);
  CHECK(b[0].upper == 90.66);
  CHECK(b[1].lower == 4.0);
  CHECK(b[1].upper == 6.0);
  CHECK(b[2].lower == 0.8);
  CHECK(b[2].upper == 1.3);
  CHECK(b[3].lower == 0.8);
  CHECK(b[3].upper == 3.0);
  CHECK(table_means()(0) == 55.84);
  CHECK(table_stds()(0) == 34.82);
  CHECK(table_stds()(3) == 1.1);
  CHECK(parameter_names() == std::vector<std::string>{"K2", "MTL", "CTL", "CTV"});
}

TEST_CASE("default grid layout") {
  const auto g = default_grid();
  CHECK(g.station_count() == 5);
  CHECK(g.time_count() == 38);
  CHECK(g.state_dim() == 570);
  CHECK(g.times_h[1] - g.times_h[0] == doctest::Approx(20.0 / 60.0));
  for (int i : {0, 37, 38, 200, 569}) {
    const auto loc = locate(g, i);
    CHECK(state_index(g, loc.variable, loc.station, loc.time) == i);
  }
  const auto labels = state_labels(g);
  CHECK(labels.front() == "u/P1/t00");
  CHECK(labels.back() == "eta/P5/t37");
  CHECK_THROWS_AS(locate(g, 570), ValidationError);
  auto bad = g;
  bad.times_h[3] = bad.times_h[2];
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("CTL = 0 leaves the mean tidal level everywhere") {
  const auto g = default_grid();
  const VectorXd y = simulate(TidalParams{50.0, 4.7, 0.0, 1.5}, g, false);
  for (int p = 0; p < g.station_count(); ++p) {
    for (int t = 0; t < g.time_count(); ++t) CHECK(y(state_index(g, Variable::Eta, p, t)) == doctest::Approx(4.7));
  }
}

TEST_CASE("CTV = 0 gives a fluid at rest") {
  const auto g = default_grid();
  const VectorXd y = simulate(TidalParams{50.0, 4.7, 1.1, 0.0}, g, false);
  for (int p = 0; p < g.station_count(); ++p) {
    for (int t = 0; t < g.time_count(); ++t) {
      CHECK(y(state_index(g, Variable::U, p, t)) == 0.0);
      CHECK(y(state_index(g, Variable::V, p, t)) == 0.0);
    }
  }
}

TEST_CASE("weaker friction gives faster currents") {
  const auto g = default_grid();
  const double rough = max_abs_u(simulate(TidalParams{21.02, 5.0, 1.05, 1.9}, g), g);
  const double smooth = max_abs_u(simulate(TidalParams{90.66, 5.0, 1.05, 1.9}, g), g);
  CHECK(smooth > rough);
  double prev = 0.0;
  for (double k = 21.02; k <= 90.66; k += 6.0) {
    const double u = max_abs_u(simulate(TidalParams{k, 5.0, 1.05, 1.9}, g), g);
    CHECK(u > prev);
    prev = u;
  }
}

TEST_CASE("out-of-bounds parameters are rejected") {
  const auto g = default_grid();
  CHECK_THROWS_AS(simulate(TidalParams{10.0, 5.0, 1.0, 1.0}, g), ValidationError);
  CHECK_THROWS_AS(simulate(VectorXd::Constant(3, 1.0), g), ValidationError);
}

TEST_CASE("ensemble simulation matches single runs for any worker count") {
  const auto g = default_grid();
  const MatrixXd p = sample_parameters(parameter_bounds(), 9, 5);
  const MatrixXd one = simulate_ensemble(p, g, 1);
  const MatrixXd three = simulate_ensemble(p, g, 3);
  CHECK(one == three);
  for (int j = 0; j < 9; ++j) CHECK(one.col(j) == simulate(VectorXd(p.row(j).transpose()), g));
}

TEST_CASE("uniform sampling") {
  const auto b = parameter_bounds();
  const MatrixXd big = sample_parameters(b, 1000, 42);
  for (int i = 0; i < kParamCount; ++i) {
    CHECK(big.col(i).minCoeff() >= b[i].lower);
    CHECK(big.col(i).maxCoeff() <= b[i].upper);
  }
  // Population mean 55.84; the MC standard error at n = 1000 is about 0.64.
  CHECK(big.col(0).mean() >= 52.0);
  CHECK(big.col(0).mean() <= 60.0);

  const MatrixXd small = sample_parameters(b, 100, 42);
  const MatrixXd larger = sample_parameters(b, 400, 42);
  CHECK(larger.topRows(100) == small);
  CHECK(sample_parameters(b, 100, 43) != small);
  CHECK(sample_parameters(b, 100, 42, "truth") != small);
  CHECK_THROWS_AS(sample_parameters(b, 0, 42), ValidationError);
  CHECK_THROWS_AS(sample_parameters({{1.0, 1.0}}, 3, 42), ValidationError);
}

TEST_CASE("parameter vector conversions") {
  const TidalParams p{30.0, 4.5, 0.9, 2.0};
  const auto q = TidalParams::from_vector(p.to_vector());
  CHECK(q.K2 == 30.0);
  CHECK(q.CTV == 2.0);
  CHECK_THROWS_AS(TidalParams::from_vector(VectorXd::Zero(5)), ValidationError);
}
