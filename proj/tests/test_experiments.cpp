#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nsde/experiments.hpp"
#include "support.hpp"

using namespace nsde;
using namespace nsde::test;

TEST_CASE("bound proxy") {
  CHECK(bound_proxy(36, 20, 1000, 0.01) == doctest::Approx(3.6));
  CHECK(bound_proxy(36, 20, 200000, 0.01) == doctest::Approx(0.018));
  CHECK(code_of([] { bound_proxy(36, 0, 10, 0.1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("reference table rows are consistent") {
  const auto& rows = error_table_reference();
  REQUIRE(rows.size() == 11);
  std::size_t bound_mismatches = 0;
  for (const auto& r : rows) {
    CHECK(r.epsilon == doctest::Approx(static_cast<double>(r.edges) / r.horizon).epsilon(0.05));
    // Two rows list a Bound that is not K * eps; the error study reports them in its notes.
    if (std::abs(r.bound - r.K * r.epsilon) > 0.15 * r.bound) {
      ++bound_mismatches;
      CHECK(r.d >= 16);
      CHECK(r.epsilon == 0.5);
    }
    if (r.d == 32) {
      // This row lists |E| = 100, but its pi and K both imply 140 edges.
      CHECK(r.pi == 2 * r.d + 140);
      CHECK(r.K == doctest::Approx(r.pi / 140.0).epsilon(0.01));
    } else {
      CHECK(r.pi == 2 * r.d + r.edges);
      CHECK(r.K == doctest::Approx(static_cast<double>(r.pi) / static_cast<double>(r.edges)).epsilon(0.03));
    }
  }
  CHECK(bound_mismatches == 2);
  // Errors halve as T doubles along the d = 8 rows.
  for (std::size_t k = 1; k < 4; ++k) CHECK(rows[k].mean < rows[k - 1].mean);
}

TEST_CASE("study configuration validation") {
  StudyConfig c = error_table_config(8, 20, 10.0);
  CHECK_NOTHROW(c.validate());
  CHECK(c.n() == 1000);
  c.horizon = 10.005;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidArgument);
  c.horizon = 10.0;
  c.substeps = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidSubsteps);
  c.substeps = 10;
  c.alpha = -1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::NegativeAlpha);
}

TEST_CASE("noiseless paths cannot be fitted") {
  StudyConfig c = error_table_config(8, 20, 10.0);
  c.alpha = 0.0;
  c.replications = 2;
  CHECK_THROWS_AS(error_bound_study(c), Error);
}

TEST_CASE("reference graphs") {
  const auto fixed = find_fixed_edge_graph(8, 20, 7.0, 2.0);
  CHECK(fixed.graph.edge_count() == 20);
  CHECK(ergodicity_margin(Eigen::VectorXd::Constant(8, 7.0), 2.0 * fixed.graph.adjacency(), MarginMode::Singular) > 0);
  CHECK(find_fixed_edge_graph(8, 20, 7.0, 2.0, fixed.seed).seed == fixed.seed);

  const auto er = find_er_reference();
  const auto deg = degree_distribution(er.graph);
  CHECK(*std::max_element(deg.in_degrees.begin(), deg.in_degrees.end()) == 4);
  const double tau = largest_singular_value(2.0 * er.graph.adjacency());
  CHECK(tau >= 5.0);
  CHECK(tau <= 5.5);
  CHECK(er.graph.adjacency() == generate(ErdosRenyi{0.25}, 10, er.seed).adjacency());
  CHECK(code_of([] { find_fixed_edge_graph(3, 7, 7.0, 2.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("compare_adjacency") {
  const Eigen::MatrixXd truth = build_graph(3, {{0, 1}, {1, 2}}).adjacency();
  const Eigen::MatrixXd est = build_graph(3, {{0, 1}, {2, 1}, {0, 2}}).adjacency();
  const EdgeConfusion c = compare_adjacency(est, truth);
  CHECK(c.true_positives == 1);
  CHECK(c.false_positives == 2);
  CHECK(c.false_negatives == 1);
  CHECK(c.false_reverse == 1);
  CHECK(code_of([] { compare_adjacency(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 3)); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("error study: determinism and decay with the horizon") {
  StudyConfig c = error_table_config(8, 20, 10.0);
  c.replications = 20;
  c.parallelism = Parallelism{4};
  const StudyReport a = error_bound_study(c);
  CHECK(a.pi == 36);
  CHECK(a.edges == 20);
  CHECK(a.bound == doctest::Approx(3.6));
  CHECK(a.replications.size() == 20);
  c.parallelism = Parallelism{1};
  const StudyReport b = error_bound_study(c);
  for (std::size_t r = 0; r < 20; ++r) CHECK(a.replications[r].squared_error == b.replications[r].squared_error);

  c.horizon = 40.0;
  c.parallelism = Parallelism{0};
  const StudyReport longer = error_bound_study(c);
  // Error scales like 1 / T: four times the data should cut it by roughly four.
  const double ratio = a.mean_per_coordinate / longer.mean_per_coordinate;
  CHECK(ratio > 2.5);
  CHECK(ratio < 6.0);
}

TEST_CASE("recovery study runs end to end") {
  StudyConfig c = er_study_config();
  c.replications = 4;
  c.parallelism = Parallelism{0};
  const StudyReport r = run_study(c);
  CHECK(r.replications.size() == 4);
  CHECK(r.recovery_rate >= 0.5);
  CHECK(r.mean_precision > 0.8);
  for (const auto& rec : r.replications) {
    CHECK(rec.lambda_selected == doctest::Approx(0.1 * rec.lambda_max));
    CHECK(rec.margin_rowsum == doctest::Approx(-1.0));
  }
  const ReplicationRecord again = recovery_replication(c, 2);
  CHECK(again.exact_recovery == r.replications[2].exact_recovery);
  CHECK(again.lambda_max == r.replications[2].lambda_max);
}
