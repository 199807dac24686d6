#include <doctest.h>

#include "support.hpp"
#include "surroda/assimilate.hpp"
#include "surroda/experiments.hpp"
#include "surroda/toymodel.hpp"

using namespace surroda;
using namespace surroda::assimilate;
using surroda::testing::random_matrix;
using surroda::testing::random_vector;

namespace {

std::vector<Interval> wide(int m) { return std::vector<Interval>(m, Interval{-100.0, 100.0}); }

/// Random PODEn surrogate with m_x = 3, m_y = 7 and the matching problem.
struct LinearCase {
  surrogate::PodEnSurrogate s;
  AssimilationProblem prob;
};

LinearCase linear_case(int d, std::uint64_t seed) {
  Rng rng(seed, "assimilate");
  LinearCase c;
  const MatrixXd x = random_matrix(3, 30, rng);
  const MatrixXd y = random_matrix(7, 3, rng) * x + 0.3 * random_matrix(7, 30, rng);
  c.s = surrogate::build_poden(x, y, pod::KeepModes{d});
  c.prob.x_b = 0.3 * random_vector(3, rng);
  c.prob.B = testing::random_spd(3, rng) / 3.0;
  c.prob.y_o = random_vector(7, rng);
  c.prob.R = testing::random_spd(7, rng) / 7.0;
  c.prob.bounds = wide(3);
  return c;
}

OptimizerConfig precise() {
  OptimizerConfig c;
  c.tol = 1e-11;
  c.rel_decrease = 0.0;
  c.max_iter = 2000;
  return c;
}

}  // namespace

TEST_CASE("3DVAR cost examples") {
  AssimilationProblem p;
  p.x_b = Eigen::Vector2d(1.0, 2.0);
  p.B = MatrixXd::Identity(2, 2);
  p.y_o = Eigen::Vector3d(0.5, 0.5, 0.5);
  p.R = MatrixXd::Identity(3, 3);
  p.bounds = wide(2);
  const StateFunction obs = [&](const VectorXd&) { return VectorXd(p.y_o); };
  CHECK(cost_3dvar(p.x_b, obs, p) == 0.0);
  CHECK(cost_3dvar(p.x_b + Eigen::Vector2d(1.0, 0.0), obs, p) == doctest::Approx(0.5));

  Rng rng(1, "assimilate");
  p.B = testing::random_spd(2, rng);
  p.R = testing::random_spd(3, rng);
  p.alpha_B = 0.7;
  p.alpha_R = 3.0;
  const MatrixXd g = random_matrix(3, 2, rng);
  const StateFunction lin = [&](const VectorXd& x) { return VectorXd(g * x); };
  const VectorXd x = random_vector(2, rng);
  const VectorXd dx = x - p.x_b, dy = g * x - p.y_o;
  const double direct = 0.5 * dx.dot((0.7 * p.B).inverse() * dx) + 0.5 * dy.dot((3.0 * p.R).inverse() * dy);
  CHECK(cost_3dvar(x, lin, p) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("covariances that are not positive definite are rejected") {
  AssimilationProblem p;
  p.x_b = Eigen::Vector2d(0.0, 0.0);
  p.B = MatrixXd::Identity(2, 2);
  p.y_o = Eigen::Vector2d(0.0, 0.0);
  p.R = Eigen::Vector2d(1.0, -0.5).asDiagonal();
  p.bounds = wide(2);
  const StateFunction id = [](const VectorXd& x) { return x; };
  CHECK_THROWS_WITH_AS(cost_3dvar(p.x_b, id, p), doctest::Contains("observation covariance must be positive definite"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(cost_3dvar(p.x_b, id, p), doctest::Contains("-0.5"), ValidationError);
}

TEST_CASE("scale_covariances") {
  auto c = linear_case(3, 2);
  const auto same = scale_covariances(c.prob, 1.0, 1.0);
  CHECK(same.B == c.prob.B);
  CHECK(same.R == c.prob.R);
  const auto scaled = scale_covariances(c.prob, 2.0, 5.0);
  CHECK(scaled.B == 2.0 * c.prob.B);
  CHECK(c.prob.alpha_B == 1.0);
  CHECK_THROWS_AS(scale_covariances(c.prob, 0.0, 1.0), ValidationError);

  // Uniform scaling leaves the minimizer unchanged.
  const auto a = solve_poden3dvar(c.s, c.prob);
  auto uniform = c.prob;
  uniform.alpha_B = uniform.alpha_R = 37.0;
  const auto b = solve_poden3dvar(c.s, uniform);
  CHECK((a.x_a - b.x_a).norm() < 1e-6);
}

TEST_CASE("bounded quasi-Newton on separable quadratics") {
  const VectorXd c = Eigen::Vector3d(0.3, -0.7, 1.4);
  const Objective f = [&](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  const auto inside = bounded_quasi_newton(f, VectorXd::Zero(3), wide(3));
  CHECK(inside.converged);
  CHECK((inside.x - c).norm() < 1e-8);

  const std::vector<Interval> box(3, Interval{-0.5, 0.5});
  const auto clipped = bounded_quasi_newton(f, VectorXd::Zero(3), box);
  CHECK(clipped.converged);
  CHECK((clipped.x - Eigen::Vector3d(0.3, -0.5, 0.5)).norm() < 1e-8);
  for (std::size_t k = 1; k < clipped.trace.size(); ++k) CHECK(clipped.trace[k].cost <= clipped.trace[k - 1].cost);

  const Objective bad = [](const VectorXd&, VectorXd* g) {
    if (g) g->setZero(1);
    return std::nan("");
  };
  CHECK_THROWS_AS(bounded_quasi_newton(bad, VectorXd::Zero(1), wide(1)), ValidationError);
  CHECK_THROWS_AS(bounded_quasi_newton(f, VectorXd::Constant(3, 1.0), box), ValidationError);
}

TEST_CASE("bounded quasi-Newton on Rosenbrock") {
  const Objective rosen = [](const VectorXd& x, VectorXd* g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    if (g) *g = Eigen::Vector2d(-2.0 * a - 400.0 * x(0) * b, 200.0 * b);
    return a * a + 100.0 * b * b;
  };
  const auto r = bounded_quasi_newton(rosen, Eigen::Vector2d(-1.2, 1.0), std::vector<Interval>(2, {-2.0, 2.0}), precise());
  CHECK(r.converged);
  CHECK((r.x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-5);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].cost <= r.trace[k - 1].cost);
}

TEST_CASE("iteration cap reports non-convergence") {
  const Objective rosen = [](const VectorXd& x, VectorXd* g) {
    const double a = 1.0 - x(0), b = x(1) - x(0) * x(0);
    if (g) *g = Eigen::Vector2d(-2.0 * a - 400.0 * x(0) * b, 200.0 * b);
    return a * a + 100.0 * b * b;
  };
  OptimizerConfig cfg;
  cfg.max_iter = 3;
  const auto r = bounded_quasi_newton(rosen, Eigen::Vector2d(-1.2, 1.0), wide(2), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.reason == "maximum iterations reached");
}

TEST_CASE("PODEn closed form: distrusted observations return the background") {
  auto c = linear_case(3, 3);
  c.prob.alpha_R = 1e9;
  const auto r = solve_poden3dvar(c.s, c.prob);
  CHECK((r.nu_a - r.nu_b).norm() < 1e-6);
  CHECK((r.x_a - c.prob.x_b).norm() < 1e-6);
  CHECK(r.evaluations == 0);
  CHECK(r.reason == "closed form");
}

TEST_CASE("PODEn closed form: distrusted background is a weighted least-squares fit") {
  auto c = linear_case(2, 4);
  c.prob.alpha_B = 1e9;
  const auto r = solve_poden3dvar(c.s, c.prob);
  const MatrixXd m = c.s.map_y();
  const MatrixXd rinv = c.prob.R.inverse();
  const VectorXd ls = (m.transpose() * rinv * m).ldlt().solve(m.transpose() * rinv * (c.prob.y_o - c.s.offset_y()));
  CHECK(testing::relative_error(r.nu_a, ls) < 1e-6);
}

TEST_CASE("PODEn closed form matches iterative minimization") {
  for (std::uint64_t seed = 5; seed < 8; ++seed) {
    auto c = linear_case(3, seed);
    const auto closed = solve_poden3dvar(c.s, c.prob);
    const Objective f = [&](const VectorXd& nu, VectorXd* g) { return poden_cost(c.s, c.prob, nu, g); };
    const auto it = bounded_quasi_newton(f, VectorXd::Zero(3), wide(3), precise());
    CHECK((closed.nu_a - it.x).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("PODEn reduced gradient matches finite differences") {
  auto c = linear_case(3, 9);
  Rng rng(9, "fd");
  const VectorXd nu = random_vector(3, rng);
  VectorXd g;
  poden_cost(c.s, c.prob, nu, &g);
  const auto fd = testing::central_gradient([&](const VectorXd& v) { return poden_cost(c.s, c.prob, v); }, nu,
                                            VectorXd::Constant(3, 1e-5));
  CHECK(testing::relative_error(g, fd) < 1e-7);
}

TEST_CASE("POD-PCE solver: zero-residual fixed point and hand quadratic") {
  // One parameter on [0, 4], scalar state, nu~(x) = 0.2 + 0.5 xi_1(T(x)).
  surrogate::PodPceSurrogate s;
  s.state_basis = pod::PodBasis(VectorXd::Constant(1, 1.0), MatrixXd::Identity(1, 1), VectorXd::Constant(1, 2.0),
                                MatrixXd::Zero(5, 1), 1);
  s.ensemble_size = 5;
  s.bounds = {{0.0, 4.0}};
  MatrixXd coef(1, 2);
  coef << 0.2, 0.5;
  s.pce = pce::PceModel({{pce::Family::Legendre, 0.0, 4.0}}, 1, coef, {1}, VectorXd::Zero(1), VectorXd::Zero(1));
  // G(x) = 1 + 2 (0.2 + 0.5 sqrt(3) (x/2 - 1)) = g0 + g1 x
  const double g1 = 0.5 * std::sqrt(3.0), g0 = 1.4 - std::sqrt(3.0);

  AssimilationProblem p;
  p.x_b = VectorXd::Constant(1, 1.5);
  p.B = MatrixXd::Identity(1, 1);
  p.R = MatrixXd::Identity(1, 1);
  p.bounds = s.bounds;
  p.y_o = surrogate::podpce_predict(s, p.x_b);
  const auto fixed = solve_podpce3dvar(s, p, precise());
  CHECK(std::abs(fixed.x_a(0) - 1.5) < 1e-10);

  p.y_o = VectorXd::Constant(1, 2.3);
  const double expected = (1.5 + g1 * (2.3 - g0)) / (1.0 + g1 * g1);
  const auto r = solve_podpce3dvar(s, p, precise());
  CHECK(r.converged);
  CHECK(r.x_a(0) == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("classical 3DVAR on linear models") {
  AssimilationProblem p;
  p.x_b = Eigen::Vector3d(0.2, -0.4, 1.0);
  p.B = MatrixXd::Identity(3, 3);
  p.R = MatrixXd::Identity(3, 3);
  p.y_o = p.x_b;
  p.bounds = wide(3);
  const StateFunction id = [](const VectorXd& x) { return x; };
  const auto same = solve_classical_3dvar(id, p, {}, precise());
  CHECK((same.x_a - p.x_b).norm() < 1e-8);

  Rng rng(10, "assimilate");
  const MatrixXd g = random_matrix(6, 3, rng);
  p.B = testing::random_spd(3, rng) / 3.0;
  p.R = testing::random_spd(6, rng) / 6.0;
  p.y_o = random_vector(6, rng);
  const StateFunction lin = [&](const VectorXd& x) { return VectorXd(g * x); };
  const MatrixXd bi = p.B.inverse(), ri = p.R.inverse();
  const VectorXd expected =
      p.x_b + (bi + g.transpose() * ri * g).ldlt().solve(g.transpose() * ri * (p.y_o - g * p.x_b));
  const auto r = solve_classical_3dvar(lin, p, {}, precise());
  CHECK((r.x_a - expected).norm() < 1e-6);
  CHECK(r.evaluations >= r.iterations * 2 * 3);
}

TEST_CASE("classical 3DVAR reports a failing forward model") {
  AssimilationProblem p;
  p.x_b = Eigen::Vector2d(0.0, 0.0);
  p.B = MatrixXd::Identity(2, 2);
  p.R = MatrixXd::Identity(2, 2);
  p.y_o = Eigen::Vector2d(1.0, 1.0);
  p.bounds = wide(2);
  const StateFunction broken = [](const VectorXd& x) -> VectorXd {
    if (x(0) > 0.0) throw std::runtime_error("solver diverged");
    return x;
  };
  CHECK_THROWS_WITH_AS(solve_classical_3dvar(broken, p), doctest::Contains("probe"), NumericalError);
}

TEST_CASE("classical 3DVAR recovers a noiseless toy twin") {
  const auto grid = toymodel::default_grid();
  const VectorXd x_t = Eigen::Vector4d(61.0, 4.1, 1.12, 0.9);
  AssimilationProblem p;
  p.x_b = toymodel::table_means();
  p.B = toymodel::table_stds().array().square().matrix().asDiagonal();
  p.y_o = toymodel::simulate(x_t, grid);
  const VectorXd sd = experiments::series_noise_std(p.y_o, grid.time_count(), 0.01);
  p.R = sd.array().square().matrix().asDiagonal();
  p.bounds = toymodel::parameter_bounds();
  const StateFunction model = [&](const VectorXd& x) { return toymodel::simulate(x, grid); };
  const auto r = solve_classical_3dvar(model, p);
  const VectorXd z = (r.x_a - x_t).cwiseQuotient(toymodel::table_stds());
  CHECK(z.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("POD-PCE twin on the toy model") {
  const auto grid = toymodel::default_grid();
  const auto bounds = toymodel::parameter_bounds();
  const MatrixXd params = toymodel::sample_parameters(bounds, 400, 42);
  const MatrixXd states = toymodel::simulate_ensemble(params, grid);
  const auto s = surrogate::build_podpce(params.transpose(), states, pod::EvrThreshold{0.95}, bounds, {}, 42);
  const VectorXd x_t = Eigen::Vector4d(48.0, 4.3, 1.08, 1.05);
  const VectorXd y_t = toymodel::simulate(x_t, grid);
  const auto obs = experiments::inject_noise(y_t, grid.time_count(), 0.10, 42);

  AssimilationProblem p;
  p.x_b = toymodel::table_means();
  p.B = toymodel::table_stds().array().square().matrix().asDiagonal();
  p.y_o = obs.y_o;
  p.R = surrogate::metamodel_error_covariance(s, obs.R()).matrix;
  p.bounds = bounds;
  const auto r = solve_podpce3dvar(s, p);
  CHECK(r.converged);
  const VectorXd z = (r.x_a - x_t).cwiseQuotient(toymodel::table_stds());
  CHECK(z.cwiseAbs().maxCoeff() <= 0.15);

  // Analytic gradient against central differences at the analysis.
  VectorXd g;
  podpce_cost(s, p, p.x_b, &g);
  const VectorXd h = toymodel::table_stds() * 1e-5;
  const auto fd = testing::central_gradient([&](const VectorXd& x) { return podpce_cost(s, p, x); }, p.x_b, h);
  CHECK(testing::relative_error(g, fd) < 1e-6);

  // Trusting observations less pulls the analysis toward the background.
  auto loose = p;
  loose.alpha_R = 100.0;
  const auto rl = solve_podpce3dvar(s, loose);
  const auto bnorm = [&](const VectorXd& x) { return (x - p.x_b).cwiseQuotient(toymodel::table_stds()).norm(); };
  CHECK(bnorm(rl.x_a) <= bnorm(r.x_a));
}
