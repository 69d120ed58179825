#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsde/community.hpp"
#include "nsde/experiments.hpp"
#include "nsde/graph.hpp"
#include "support.hpp"

using namespace nsde;
using namespace nsde::test;

TEST_CASE("two triangles joined by one edge") {
  const auto g = build_graph(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}, {3, 2}});
  const auto labels = detect_communities(g);
  CHECK(labels == std::vector<std::size_t>{0, 0, 0, 1, 1, 1});
  CHECK(modularity(g, labels) == doctest::Approx(5.0 / 14.0));
}

TEST_CASE("degenerate graphs") {
  const auto complete = DirectedGraph::complete(5);
  CHECK(community_count(detect_communities(complete)) == 1);
  const auto empty = DirectedGraph::empty(4);
  CHECK(detect_communities(empty) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(modularity(empty, {0, 1, 2, 3}) == 0.0);
}

TEST_CASE("planted partition is recovered") {
  const StochasticBlock sbm{{4, 11, 6}, 0.9, 0.05};
  std::size_t good = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto g = generate(sbm, 21, s);
    const auto labels = detect_communities(g);
    const double agree = agreement(labels, sbm.memberships());
    if (community_count(labels) == 3 && agree >= 0.9) ++good;
    // Louvain never does worse than the trivial partitions.
    std::vector<std::size_t> singletons(21);
    for (std::size_t i = 0; i < 21; ++i) singletons[i] = i;
    CHECK(modularity(g, labels) >= modularity(g, singletons));
    CHECK(modularity(g, labels) >= modularity(g, std::vector<std::size_t>(21, 0)));
    CHECK(modularity(g, labels) >= modularity(g, sbm.memberships()) - 1e-12);
  }
  CHECK(good >= 19);
}

TEST_CASE("agreement") {
  CHECK(agreement({2, 2, 0, 0, 1}, {0, 0, 1, 1, 2}) == 1.0);
  CHECK(agreement({0, 0, 0, 1}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(agreement({0, 0, 0, 0}, {0, 1, 2, 3}) == doctest::Approx(0.25));
  CHECK(code_of([] { agreement({0, 1}, {0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("weighted input is symmetrized") {
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4, 4);
  W(0, 1) = 3.0;
  W(3, 2) = 3.0;
  W(1, 2) = 0.1;
  CHECK(detect_communities(W) == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(detect_communities(Eigen::MatrixXd(W.transpose())) == detect_communities(W));
}

TEST_CASE("community count along a lasso path") {
  LassoPath path;
  path.adjacency.push_back(Eigen::MatrixXd::Zero(6, 6));
  path.adjacency.push_back(build_graph(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}, {3, 2}}).adjacency());
  const auto curve = cluster_lambda_curve(path);
  CHECK(curve == std::vector<std::size_t>{6, 2});
}
