#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nsde/estimate.hpp"
#include "nsde/experiments.hpp"
#include "nsde/optimize.hpp"
#include "nsde/rng.hpp"
#include "support.hpp"

using namespace nsde;
using namespace nsde::test;

namespace {

SamplePath path_from(std::initializer_list<double> values, double delta) {
  SamplePath p;
  p.delta = delta;
  p.data.resize(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index k = 0;
  for (double v : values) p.data(k++, 0) = v;
  return p;
}

// Straight transcription of the contrast with a dense drift matrix; shares no code with
// the library's evaluators.
double contrast_by_formula(const SamplePath& path, const Eigen::MatrixXd& M, const Eigen::VectorXd& alpha, double c) {
  double total = 0.0;
  const double dt = path.delta;
  for (Eigen::Index i = 1; i < path.data.rows(); ++i) {
    const Eigen::VectorXd x = path.data.row(i - 1).transpose();
    const Eigen::VectorXd dx = (path.data.row(i) - path.data.row(i - 1)).transpose();
    const Eigen::VectorXd b = M * x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double sigma = alpha(j) * c * std::tanh(std::sqrt(1.0 + x(j) * x(j)) / c);
      const double r = dx(j) - dt * b(j);
      total += r * r / (2.0 * dt * sigma * sigma) + 0.5 * std::log(sigma * sigma);
    }
  }
  return total;
}

Eigen::MatrixXd drift_matrix(const Instance& in, const ParamVector& theta) {
  const auto d = static_cast<Eigen::Index>(in.g.d());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) M(i, i) = -theta.beta(i);
  for (std::size_t e = 0; e < in.g.edge_count(); ++e)
    M(static_cast<Eigen::Index>(in.g.edges()[e].child), static_cast<Eigen::Index>(in.g.edges()[e].parent)) =
        theta.beta(d + static_cast<Eigen::Index>(e));
  return M;
}

}  // namespace

TEST_CASE("quasi_loglik examples") {
  NsdeSpec spec = linear_spec(1, ConstantDiagonal{});
  const auto g = DirectedGraph::empty(1);
  const ParamVector zero_drift = uniform_params(ParamLayout(spec, g, false), 1.0, 0.0, 0.0);
  CHECK(quasi_loglik(path_from({1.0, 1.0, 1.0}, 0.1), spec, g, zero_drift) == 0.0);
  CHECK(quasi_loglik(path_from({0.0, 0.2}, 0.1), spec, g, zero_drift) == doctest::Approx(0.2).epsilon(1e-14));

  const ParamVector degenerate = uniform_params(ParamLayout(spec, g, false), 0.0, 0.0, 0.0);
  CHECK(code_of([&] { quasi_loglik(path_from({0.0, 0.2}, 0.1), spec, g, degenerate); }) ==
        ErrorCode::DegenerateDiffusion);
}

TEST_CASE("quasi_loglik agrees with a formula transcription") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto g = generate(ErdosRenyi{0.5}, 3, s);
    Instance in = simulate_instance(g, 4.0, 1.0, 1.5, 0.5, s);
    ParamVector theta = in.theta;
    SeededStream rng(s);
    for (Eigen::Index k = 0; k < theta.beta.size(); ++k) theta.beta(k) += rng.uniform() - 0.5;
    for (Eigen::Index k = 0; k < theta.alpha.size(); ++k) theta.alpha(k) += 0.5 * rng.uniform();
    const double lib = quasi_loglik(in.path, in.spec, g, theta);
    const double oracle = contrast_by_formula(in.path, drift_matrix(in, theta), theta.alpha, 100.0);
    CHECK(std::abs(lib - oracle) <= 1e-12 * std::abs(oracle));
  }
}

TEST_CASE("sufficient statistics reproduce the contrast, gradient and Hessian") {
  const auto g = generate(ErdosRenyi{0.4}, 4, 3);
  const Instance in = simulate_instance(g, 5.0, 1.0, 2.0, 5.0, 3);
  const ParamLayout layout(in.spec, g, false);
  const DriftDesign design(in.spec, g, layout);
  const ContrastStats stats(in.path, in.spec, layout, design, IncrementSet::all(in.path.n()));

  Eigen::VectorXd flat = in.theta.flatten();
  flat(1) += 0.3;
  flat(layout.momentum_slot(2)) -= 1.0;
  const double direct = quasi_loglik(in.path, in.spec, g, ParamVector::unflatten(layout, flat));
  Eigen::VectorXd grad;
  CHECK(stats.value(flat, &grad) == doctest::Approx(direct).epsilon(1e-10));

  const auto f = [&](const Eigen::VectorXd& x) { return stats.value(x); };
  const Eigen::VectorXd fd = finite_difference_gradient(f, flat);
  CHECK((grad - fd).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + grad.cwiseAbs().maxCoeff()));

  const Eigen::MatrixXd analytic = stats.hessian(flat);
  const Eigen::MatrixXd numeric = numerical_hessian_from_gradient(
      [&](const Eigen::VectorXd& x, Eigen::VectorXd* gr) { return stats.value(x, gr); }, flat);
  CHECK((analytic - numeric).cwiseAbs().maxCoeff() <= 1e-6 * analytic.cwiseAbs().maxCoeff());
  CHECK((analytic - analytic.transpose()).cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("fold statistics add up") {
    const std::size_t n = in.path.n();
    ContrastStats parts(in.path, in.spec, layout, design, IncrementSet::range(0, n / 3));
    parts += ContrastStats(in.path, in.spec, layout, design, IncrementSet::all_but(n, 0, n / 3));
    CHECK(parts.value(flat) == doctest::Approx(stats.value(flat)).epsilon(1e-12));
  }
}

TEST_CASE("closed form: scalar least squares") {
  const Instance in = simulate_instance(DirectedGraph::empty(1), 2.0, 0.0, 1.0, 20.0, 9, 0.01, ConstantDiagonal{});
  const std::size_t n = in.path.n();
  const ClosedFormFit fit =
      fit_linear_closed_form(in.path, in.g, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), 1), false);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = in.path.data(static_cast<Eigen::Index>(i - 1), 0);
    num += (in.path.data(static_cast<Eigen::Index>(i), 0) - x) * x;
    den += x * x;
  }
  CHECK(-fit.beta(0) == doctest::Approx(num / (in.path.delta * den)).epsilon(1e-12));
}

TEST_CASE("closed form solves its normal equations") {
  const auto g = generate(ErdosRenyi{0.4}, 5, 1);
  const Instance in = simulate_instance(g, 7.0, 1.0, 2.0, 20.0, 1);
  const Eigen::VectorXd alpha = stage_one_alpha(in.path, in.spec);
  const ClosedFormFit fit = fit_linear_closed_form(in.path, g, sigma_hat_matrix(in.path, in.spec, alpha), false);
  for (std::size_t j = 0; j < 5; ++j) {
    const auto& parents = g.parents(j);
    Eigen::VectorXd v(static_cast<Eigen::Index>(1 + parents.size()));
    v(0) = -fit.beta(static_cast<Eigen::Index>(j));
    for (std::size_t k = 0; k < parents.size(); ++k)
      v(static_cast<Eigen::Index>(k + 1)) = fit.beta(static_cast<Eigen::Index>(5 + g.edge_index(j, parents[k])));
    const Eigen::VectorXd residual = in.path.delta * fit.normal_matrices[j] * v - fit.normal_rhs[j];
    CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + fit.normal_rhs[j].cwiseAbs().maxCoeff()));
    CHECK(fit.condition_numbers[j] >= 1.0);
  }
}

TEST_CASE("closed form rejects duplicated regressors") {
  const auto g = build_graph(2, {{0, 1}});
  SamplePath p;
  p.delta = 0.01;
  p.data.resize(50, 2);
  for (Eigen::Index i = 0; i < 50; ++i) p.data(i, 0) = p.data(i, 1) = std::sin(0.3 * static_cast<double>(i));
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(49, 2);
  CHECK(code_of([&] { fit_linear_closed_form(p, g, ones, false); }) == ErrorCode::SingularGram);
  ClosedFormOptions o;
  o.allow_jitter = true;
  const ClosedFormFit jittered = fit_linear_closed_form(p, g, ones, false, o);
  CHECK(jittered.jittered_nodes == std::vector<std::size_t>{0});
}

TEST_CASE("closed form equals the QMLE with frozen diffusion") {
  const auto g = generate(ErdosRenyi{0.4}, 3, 4);
  const Instance in = simulate_instance(g, 6.0, 1.5, 2.0, 50.0, 4);
  const Eigen::VectorXd alpha = stage_one_alpha(in.path, in.spec);
  const ClosedFormFit cf = fit_linear_closed_form(in.path, g, sigma_hat_matrix(in.path, in.spec, alpha), false);
  FitOptions o;
  o.frozen_alpha = alpha;
  o.restarts = 1;
  // The default stopping rule is relative to |contrast| ~ 1e4, too loose for a 1e-6 comparison.
  o.gradient_tolerance = 1e-14;
  ParamVector init = in.theta;
  init.alpha = alpha;
  const FitResult fit = fit_qmle(in.path, in.spec, g, init, o);
  CHECK(fit.converged);
  CHECK((fit.theta_hat.beta - cf.beta).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("scaled_information") {
  FitResult fit;
  fit.theta_hat.alpha = Eigen::VectorXd::Ones(1);
  fit.theta_hat.beta = Eigen::VectorXd::Ones(1);
  fit.pi_alpha = 1;
  fit.info_matrix = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd S = scaled_information(fit, 100, 0.1);
  CHECK(S(0, 0) == doctest::Approx(0.01));
  CHECK(S(1, 1) == doctest::Approx(0.1));
  CHECK(S(0, 1) == 0.0);

  SeededStream rng(3);
  Eigen::MatrixXd H(4, 4);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) H(i, j) = H(j, i) = rng.normal();
  fit.theta_hat.alpha = Eigen::VectorXd::Ones(2);
  fit.theta_hat.beta = Eigen::VectorXd::Ones(2);
  fit.pi_alpha = 2;
  fit.info_matrix = H;
  const Eigen::MatrixXd T = scaled_information(fit, 500, 0.02);
  CHECK((T - T.transpose()).cwiseAbs().maxCoeff() <= 1e-15 * T.cwiseAbs().maxCoeff());
}

TEST_CASE("scaled information stabilizes as T grows") {
  const auto g = build_graph(2, {{0, 1}});
  std::vector<Eigen::MatrixXd> infos;
  for (const double T : {100.0, 200.0, 400.0}) {
    const Instance in = simulate_instance(g, 3.0, 1.0, 1.0, T, 21);
    FitOptions o;
    o.restarts = 1;
    infos.push_back(fit_qmle(in.path, in.spec, g, in.theta, o).scaled_info);
  }
  const double scale = infos[2].cwiseAbs().maxCoeff();
  CHECK((infos[0] - infos[2]).cwiseAbs().maxCoeff() < 0.1 * scale);
  CHECK((infos[1] - infos[2]).cwiseAbs().maxCoeff() < 0.1 * scale);
}

TEST_CASE("scalar OU: QMLE within three asymptotic sd in 95% of seeds") {
  const auto g = DirectedGraph::empty(1);
  const double mu = 2.0, T = 100.0;
  const double sd = std::sqrt(2.0 * mu / T);
  int inside = 0;
  double max_gap = 0.0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const Instance in = simulate_instance(g, mu, 0.0, 1.0, T, static_cast<std::uint64_t>(s), 0.01, ConstantDiagonal{});
    FitOptions o;
    o.restarts = 1;
    const FitResult fit = fit_qmle(in.path, in.spec, g, uniform_params(ParamLayout(in.spec, g, false), 1.0, 1.0, 0.0), o);
    const double mu_hat = fit.theta_hat.beta(0);
    if (std::abs(mu_hat - mu) <= 3.0 * sd) ++inside;
    // Exact discrete-time OU maximum likelihood for comparison.
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 1; i < in.path.data.rows(); ++i) {
      num += in.path.data(i, 0) * in.path.data(i - 1, 0);
      den += in.path.data(i - 1, 0) * in.path.data(i - 1, 0);
    }
    const double mu_exact = -std::log(num / den) / in.path.delta;
    max_gap = std::max(max_gap, std::abs(mu_hat - mu_exact));
  }
  CHECK(inside >= 190);
  // The QMLE is the Euler approximation of the exact estimator: the gap is O(delta mu^2).
  CHECK(max_gap < 0.1);
}

TEST_CASE("ER configuration: alpha estimates within 0.1 of 2") {
  const auto ref = find_er_reference();
  const Instance in = simulate_instance(ref.graph, 7.0, 2.0, 2.0, 200.0, 5);
  FitOptions o;
  o.restarts = 2;
  const FitResult fit = fit_qmle(in.path, in.spec, ref.graph, in.theta, o);
  CHECK(fit.converged);
  CHECK((fit.theta_hat.alpha.array() - 2.0).abs().maxCoeff() <= 0.1);
  for (std::size_t k = 1; k < fit.trace.size(); ++k) CHECK(fit.trace[k] <= fit.trace[k - 1]);

  const ParamLayout layout(in.spec, ref.graph, false);
  const DriftDesign design(in.spec, ref.graph, layout);
  const ContrastStats stats(in.path, in.spec, layout, design, IncrementSet::all(in.path.n()));
  Eigen::VectorXd grad;
  stats.value(fit.theta_hat.flatten(), &grad);
  CHECK(grad.cwiseAbs().maxCoeff() < 1e-8 * (1.0 + std::abs(fit.contrast_value)));
  CHECK(fit.standard_errors().allFinite());
}

TEST_CASE("single increment fit") {
  const auto g = DirectedGraph::empty(1);
  const NsdeSpec spec = linear_spec(1, ConstantDiagonal{});
  const SamplePath p = path_from({1.0, 0.97}, 0.01);
  FitOptions o;
  o.mode = FitMode::Adaptive;
  o.restarts = 1;
  const FitResult fit = fit_qmle(p, spec, g, uniform_params(ParamLayout(spec, g, false), 1.0, 1.0, 0.0), o);
  CHECK(fit.converged);
  CHECK(fit.theta_hat.beta(0) == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(fit.theta_hat.alpha(0) == doctest::Approx(0.3).epsilon(1e-8));
}

TEST_CASE("fit_qmle rejects an initial point outside the box") {
  const auto g = DirectedGraph::empty(1);
  const NsdeSpec spec = linear_spec(1, ConstantDiagonal{});
  ParamVector init = uniform_params(ParamLayout(spec, g, false), 1.0, 1.0, 0.0);
  init.beta(0) = 2e3;
  CHECK(code_of([&] { fit_qmle(path_from({1.0, 0.9, 0.8}, 0.01), spec, g, init); }) == ErrorCode::BoundsViolation);
}

TEST_CASE("joint closed-form QMLE matches the optimizer") {
  const auto g = generate(ErdosRenyi{0.3}, 5, 8);
  const Instance in = simulate_instance(g, 7.0, 1.0, 2.0, 20.0, 8);
  const ParamLayout layout(in.spec, g, false);
  const DriftDesign design(in.spec, g, layout);
  const ContrastStats stats(in.path, in.spec, layout, design, IncrementSet::all(in.path.n()));
  const Eigen::VectorXd exact = joint_qmle_closed_form(stats);
  FitOptions o;
  o.restarts = 3;
  o.gradient_tolerance = 1e-14;
  const FitResult fit = fit_qmle(in.path, in.spec, g, in.theta, o);
  CHECK((fit.theta_hat.flatten() - exact).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("rescaled error grows in proportion to the parameter count") {
  std::vector<double> log_pi, log_err;
  for (const std::size_t d : {4u, 8u, 16u}) {
    const auto ref = find_fixed_edge_graph(d, 2 * d, 7.0, 1.0);
    const NsdeSpec spec = linear_spec(d);
    const ParamLayout layout(spec, ref.graph, false);
    const DriftDesign design(spec, ref.graph, layout);
    double total = 0.0;
    const int seeds = 40;
    for (int s = 0; s < seeds; ++s) {
      const Instance in = simulate_instance(ref.graph, 7.0, 1.0, 2.0, 50.0, 1000 + static_cast<std::uint64_t>(s));
      const ContrastStats stats(in.path, spec, layout, design, IncrementSet::all(in.path.n()));
      const Eigen::VectorXd err = joint_qmle_closed_form(stats) - in.theta.flatten();
      const Eigen::VectorXd rate = rate_matrix(layout.pi_alpha(), layout.pi_total(), in.path.n(), in.path.delta);
      total += err.cwiseQuotient(rate).squaredNorm();
    }
    log_pi.push_back(std::log(static_cast<double>(layout.pi_total())));
    log_err.push_back(std::log(total / seeds));
  }
  const double slope = (log_err[2] - log_err[0]) / (log_pi[2] - log_pi[0]);
  MESSAGE("rescaled error slope = " << slope);
  CHECK(slope >= 0.7);
  CHECK(slope <= 1.3);
}
