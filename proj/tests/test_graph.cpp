#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "nsde/error.hpp"
#include "nsde/experiments.hpp"
#include "nsde/graph.hpp"
#include "nsde/rng.hpp"

using namespace nsde;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no nsde::Error thrown");
  return ErrorCode::InvalidArgument;
}

Eigen::MatrixXd random_matrix(std::size_t d, std::uint64_t seed, bool symmetric_nonneg) {
  SeededStream rng(seed);
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd B(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) B(i, j) = symmetric_nonneg ? rng.uniform() : 2.0 * rng.uniform() - 1.0;
  B.diagonal().setZero();
  if (symmetric_nonneg) B = (B + B.transpose()).eval();
  return B;
}

}  // namespace

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("counter normals have unit variance") {
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = counter_normal(42, static_cast<std::uint64_t>(k), 3);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.01);
}

TEST_CASE("build_graph") {
  SUBCASE("empty edge set") {
    const auto g = build_graph(2, {});
    CHECK(g.adjacency() == Eigen::MatrixXd::Zero(2, 2));
    CHECK(g.size() == 2);
  }
  SUBCASE("adjacency rows list parents") {
    const auto g = build_graph(3, {{0, 1}, {1, 2}});
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
    A(0, 1) = A(1, 2) = 1.0;
    CHECK(g.adjacency() == A);
    CHECK(g.parents(0) == std::vector<std::size_t>{1});
    CHECK(g.has_edge(1, 2));
    CHECK_FALSE(g.has_edge(2, 1));
  }
  SUBCASE("errors") {
    CHECK(code_of([] { build_graph(2, {{0, 0}}); }) == ErrorCode::SelfLoop);
    CHECK(code_of([] { build_graph(2, {{0, 2}}); }) == ErrorCode::IndexOutOfRange);
    CHECK(code_of([] { build_graph(3, {{0, 1}, {0, 1}}); }) == ErrorCode::DuplicateEdge);
  }
}

TEST_CASE("generate") {
  SUBCASE("pure polymer chain") {
    const auto g = generate(Polymer{{}}, 3, 0);
    CHECK(g.edges() == std::vector<Edge>{{1, 0}, {2, 1}});
  }
  SUBCASE("polymer double links") {
    const auto g = generate(Polymer::every_third(7), 7, 0);
    CHECK(g.edge_count() == 6 + 2);
    CHECK(g.has_edge(0, 1));
    CHECK(g.has_edge(3, 4));
    CHECK_FALSE(g.has_edge(1, 2));
    CHECK(code_of([] { generate(Polymer{{5}}, 5, 0); }) == ErrorCode::IndexOutOfRange);
  }
  SUBCASE("ER extremes") {
    CHECK(generate(ErdosRenyi{0.0}, 10, 9).edge_count() == 0);
    const auto full = degree_distribution(generate(ErdosRenyi{1.0}, 10, 9));
    for (std::size_t v = 0; v < 10; ++v) {
      CHECK(full.in_degrees[v] == 9);
      CHECK(full.out_degrees[v] == 9);
    }
  }
  SUBCASE("SBM intra-block expectation") {
    const StochasticBlock sbm{{4, 11, 6}, 0.9, 0.05};
    const auto blocks = sbm.memberships();
    double intra = 0.0, inter = 0.0;
    const int seeds = 200;
    for (int s = 0; s < seeds; ++s) {
      const auto g = generate(sbm, 21, static_cast<std::uint64_t>(s));
      CHECK(g.d() == 21);
      for (const auto& e : g.edges()) (blocks[e.child] == blocks[e.parent] ? intra : inter) += 1.0;
    }
    // 0.9 * 152 = 136.8 intra and 0.05 * 268 = 13.4 inter edges on average.
    CHECK(intra / seeds == doctest::Approx(136.8).epsilon(0.02));
    CHECK(inter / seeds == doctest::Approx(13.4).epsilon(0.1));
  }
  SUBCASE("deterministic in the seed") {
    CHECK(generate(ErdosRenyi{0.3}, 12, 5) == generate(ErdosRenyi{0.3}, 12, 5));
    CHECK_FALSE(generate(ErdosRenyi{0.3}, 12, 5) == generate(ErdosRenyi{0.3}, 12, 6));
  }
  SUBCASE("errors") {
    CHECK(code_of([] { generate(ErdosRenyi{1.5}, 4, 0); }) == ErrorCode::InvalidProbability);
    CHECK(code_of([] { generate(StochasticBlock{{2, 2}, 0.5, 0.1}, 5, 0); }) == ErrorCode::BlockSizeMismatch);
    CHECK(code_of([] { generate(StochasticBlock{{2, 3}, 0.5, -0.1}, 5, 0); }) == ErrorCode::InvalidProbability);
  }
}

TEST_CASE("ergodicity_margin examples") {
  const Eigen::VectorXd mu2 = Eigen::VectorXd::Constant(2, 7.0);
  CHECK(ergodicity_margin(mu2, Eigen::MatrixXd::Zero(2, 2), MarginMode::Singular) == doctest::Approx(7.0));
  CHECK(ergodicity_margin(mu2, Eigen::MatrixXd::Zero(2, 2), MarginMode::RowSum) == doctest::Approx(7.0));

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3, 3);
  B(0, 1) = 2.0;
  CHECK(ergodicity_margin(Eigen::VectorXd::Constant(3, 7.0), B, MarginMode::Singular) == doctest::Approx(5.0));

  CHECK(code_of([] { ergodicity_margin(Eigen::VectorXd::Ones(2), Eigen::MatrixXd::Zero(2, 3), MarginMode::Singular); }) ==
        ErrorCode::NonSquare);
  CHECK(code_of([] { ergodicity_margin(Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Zero(2, 2), MarginMode::RowSum); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("ER reference graph has the reported sign pattern") {
  const auto ref = find_er_reference();
  const Eigen::MatrixXd B = 2.0 * ref.graph.adjacency();
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(10, 7.0);
  const double singular = ergodicity_margin(mu, B, MarginMode::Singular);
  const double rowsum = ergodicity_margin(mu, B, MarginMode::RowSum);
  CHECK(singular > 0.0);
  CHECK(singular == doctest::Approx(1.74).epsilon(0.2));
  CHECK(rowsum == doctest::Approx(-1.0));
}

TEST_CASE("largest singular value matches a dense SVD") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const std::size_t d = 2 + s % 7;
    const Eigen::MatrixXd B = random_matrix(d, s, false);
    const double oracle = Eigen::JacobiSVD<Eigen::MatrixXd>(B).singularValues()(0);
    CHECK(std::abs(largest_singular_value(B) - oracle) <= 1e-8 * std::max(1.0, oracle));
  }
}

TEST_CASE("singular margin dominates row-sum margin for symmetric non-negative B") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const std::size_t d = 2 + s % 7;
    const Eigen::MatrixXd B = random_matrix(d, 100 + s, true);
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), 3.0);
    CHECK(ergodicity_margin(mu, B, MarginMode::Singular) >= ergodicity_margin(mu, B, MarginMode::RowSum) - 1e-12);
  }
}

TEST_CASE("degree_distribution") {
  SUBCASE("empty graph") {
    const auto h = degree_distribution(DirectedGraph::empty(5));
    CHECK(h.in_degrees == std::vector<std::size_t>(5, 0));
    CHECK(h.histogram.at(0) == 5);
  }
  SUBCASE("pure chain") {
    const auto h = degree_distribution(generate(Polymer{{}}, 3, 0));
    CHECK(h.in_degrees == std::vector<std::size_t>{0, 1, 1});
    CHECK(h.out_degrees == std::vector<std::size_t>{1, 1, 0});
  }
  SUBCASE("degree sums equal the edge count") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto g = generate(ErdosRenyi{0.3}, 15, s);
      const auto h = degree_distribution(g);
      std::size_t in = 0, out = 0;
      for (std::size_t v = 0; v < 15; ++v) {
        in += h.in_degrees[v];
        out += h.out_degrees[v];
      }
      CHECK(in == g.edge_count());
      CHECK(out == g.edge_count());
    }
  }
}
