#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nsde/error.hpp"
#include "nsde/graph.hpp"
#include "nsde/model.hpp"
#include "nsde/rng.hpp"

using namespace nsde;

namespace {

NsdeSpec linear(std::size_t d, bool intercepts = false) {
  NsdeSpec s;
  s.d = d;
  s.drift = LinearDrift{intercepts};
  return s;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

}  // namespace

TEST_CASE("drift_eval examples") {
  SUBCASE("pure momentum") {
    const auto g = DirectedGraph::empty(1);
    const ParamLayout layout(linear(1), g, false);
    const ParamVector theta = uniform_params(layout, 1.0, 2.0, 0.0);
    CHECK(drift_eval(linear(1), g, theta, vec({3.0}))(0) == doctest::Approx(-6.0));
  }
  SUBCASE("one parent") {
    const auto g = build_graph(2, {{0, 1}});
    const ParamLayout layout(linear(2), g, false);
    const ParamVector theta = uniform_params(layout, 1.0, 1.0, 0.5);
    const Eigen::VectorXd b = drift_eval(linear(2), g, theta, vec({1.0, 2.0}));
    CHECK(b(0) == doctest::Approx(0.0));
    CHECK(b(1) == doctest::Approx(-2.0));
  }
  SUBCASE("radial dictionary") {
    NsdeSpec spec;
    spec.d = 2;
    spec.drift = RadialDictionary{{1.0}, {0.0}};
    const auto g = build_graph(2, {{0, 1}});
    const ParamLayout layout(spec, g, false);
    const ParamVector theta = uniform_params(layout, 1.0, 1.0, 1.0);
    const Eigen::VectorXd b = drift_eval(spec, g, theta, vec({0.0, 3.0}));
    CHECK(b(0) == doctest::Approx(0.75));
    CHECK(b(1) == doctest::Approx(-3.0));
  }
  SUBCASE("errors") {
    const auto g = build_graph(2, {{0, 1}});
    const ParamLayout layout(linear(2), g, false);
    ParamVector theta = uniform_params(layout, 1.0, 1.0, 0.5);
    CHECK_THROWS_AS(drift_eval(linear(2), g, theta, vec({1.0, NAN})), Error);
    theta.beta.conservativeResize(2);
    CHECK_THROWS_AS(drift_eval(linear(2), g, theta, vec({1.0, 2.0})), Error);
  }
}

TEST_CASE("linear drift equals the dense matrix expression") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const std::size_t d = 2 + s % 9;
    const bool intercepts = s % 2 == 0;
    const auto g = generate(ErdosRenyi{0.4}, d, s);
    const NsdeSpec spec = linear(d, intercepts);
    const ParamLayout layout(spec, g, false);
    SeededStream rng(s);
    Eigen::VectorXd flat(static_cast<Eigen::Index>(layout.pi_total()));
    for (Eigen::Index k = 0; k < flat.size(); ++k) flat(k) = 4.0 * rng.uniform() - 2.0;
    flat.head(static_cast<Eigen::Index>(d)) = flat.head(static_cast<Eigen::Index>(d)).cwiseAbs();
    const ParamVector theta = ParamVector::unflatten(layout, flat);

    const auto n = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < d; ++i) {
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = -flat(static_cast<Eigen::Index>(layout.momentum_slot(i)));
      if (intercepts) c(static_cast<Eigen::Index>(i)) = flat(static_cast<Eigen::Index>(*layout.intercept_slot(i)));
    }
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      const Edge& edge = g.edges()[e];
      M(static_cast<Eigen::Index>(edge.child), static_cast<Eigen::Index>(edge.parent)) =
          flat(static_cast<Eigen::Index>(layout.network_slot(e)));
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k) x(k) = 6.0 * rng.uniform() - 3.0;
    CHECK((drift_eval(spec, g, theta, x) - (M * x + c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("augmented drift with w = beta equals the graph drift") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const std::size_t d = 3 + s % 5;
    const auto g = generate(ErdosRenyi{0.3}, d, s);
    const NsdeSpec spec = linear(d);
    const ParamLayout layout(spec, g, false);
    const ParamVector theta = uniform_params(layout, 1.5, 3.0, 0.7);
    const auto complete = DirectedGraph::complete(d);
    const ParamLayout aug(spec, complete, true);
    const ParamVector theta_aug = to_augmented(theta, layout, g);
    check_layout(aug, theta_aug);
    Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(d), -1.0, 2.0);
    CHECK((drift_eval(spec, g, theta, x) - drift_eval(spec, complete, theta_aug, x)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("diffusion_eval examples") {
  NsdeSpec tanh;
  tanh.d = 1;
  tanh.diffusion = TanhClipped{100.0};
  CHECK(diffusion_eval(tanh, vec({2.0}), vec({0.0}))(0) == doctest::Approx(200.0 * std::tanh(0.01)).epsilon(1e-14));
  CHECK(diffusion_eval(tanh, vec({2.0}), vec({0.0}))(0) == doctest::Approx(1.99993).epsilon(1e-5));
  CHECK(diffusion_eval(tanh, vec({1.0}), vec({1e6}))(0) == doctest::Approx(100.0));

  NsdeSpec constant;
  constant.d = 2;
  const Eigen::VectorXd s = diffusion_eval(constant, vec({3.0, 4.0}), vec({-7.0, 1e3}));
  CHECK(s(0) == 3.0);
  CHECK(s(1) == 4.0);

  CHECK_THROWS_AS(diffusion_eval(constant, vec({-1.0, 1.0}), vec({0.0, 0.0})), Error);
}

TEST_CASE("tanh-clipped diffusion is positive and bounded by alpha c") {
  NsdeSpec spec;
  spec.d = 1;
  spec.diffusion = TanhClipped{5.0};
  for (double x = -1e4; x <= 1e4; x += 37.3) {
    const double v = diffusion_eval(spec, vec({0.7}), vec({x}))(0);
    CHECK(v > 0.0);
    CHECK(v <= 0.7 * 5.0);
  }
}

TEST_CASE("parameter_layout counts") {
  SUBCASE("d=8 reference row") {
    const auto g = generate(ErdosRenyi{20.0 / 56.0}, 8, 0);
    const std::vector<std::pair<std::size_t, std::size_t>> e20 = [] {
      std::vector<std::pair<std::size_t, std::size_t>> out;
      for (std::size_t k = 0; k < 20; ++k) out.push_back({k % 8, (k % 8 + 1 + k / 8) % 8});
      return out;
    }();
    const auto g20 = build_graph(8, e20);
    const ParamLayout layout(linear(8), g20, false);
    CHECK(layout.pi_total() == 36);
    CHECK(layout.k_ratio() == doctest::Approx(36.0 / 28.0));
    CHECK(layout.epsilon_ratio(1000, 0.01) == doctest::Approx(28.0 / 10.0));
    (void)g;
  }
  SUBCASE("d=16, |E|=48") {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < 48; ++k) edges.push_back({k % 16, (k % 16 + 1 + k / 16) % 16});
    CHECK(ParamLayout(linear(16), build_graph(16, edges), false).pi_total() == 80);
  }
  SUBCASE("empty graph") {
    const ParamLayout layout(linear(3), DirectedGraph::empty(3), false);
    CHECK(layout.pi_total() == 6);
    CHECK(layout.k_ratio() == doctest::Approx(2.0));
  }
  SUBCASE("augmented and intercepts") {
    const ParamLayout aug(linear(4, true), DirectedGraph::complete(4), true);
    CHECK(aug.pi_alpha() == 4);
    CHECK(aug.pi_beta() == 8);
    CHECK(aug.pi_w() == 12);
    CHECK(aug.name(aug.weight_slot(2, 1)) == "w_2_1");
    CHECK(aug.pi_total() <= aug.k_ratio() * aug.graph_size() + 1e-12);
  }
}

TEST_CASE("spec validation") {
  NsdeSpec spec;
  spec.d = 2;
  spec.drift = RadialDictionary{{1.0, 1.0}, {0.5, 0.5}};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.drift = RadialDictionary{{-1.0}, {0.5}};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.drift = RadialDictionary{{1.0}, {1.5}};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.drift = LinearDrift{};
  spec.diffusion = TanhClipped{0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("flatten and unflatten") {
  const auto g = build_graph(3, {{0, 1}, {2, 0}});
  const ParamLayout layout(linear(3), g, false);
  const ParamVector theta = uniform_params(layout, 2.0, 7.0, 2.0);
  const Eigen::VectorXd flat = theta.flatten();
  CHECK(flat.size() == 8);
  const ParamVector back = ParamVector::unflatten(layout, flat);
  CHECK(back.flatten() == flat);
  CHECK_THROWS_AS(ParamVector::unflatten(layout, Eigen::VectorXd::Zero(7)), Error);
  const auto [lo, hi] = box_bounds(linear(3), layout);
  CHECK(lo(0) == 0.0);
  CHECK(lo(3) == -1e3);
  CHECK(hi(7) == 1e3);
}
