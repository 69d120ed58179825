#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsde/graph.hpp"
#include "nsde/lasso.hpp"
#include "nsde/model.hpp"
#include "nsde/parallel.hpp"

namespace nsde {

enum class StudyKind { ErrorBound, Er, Polymer, Sbm };
enum class EstimatorKind { ClosedForm, Qmle };

std::string to_string(StudyKind kind);
std::string to_string(EstimatorKind kind);

struct StudyConfig {
  std::string name = "study";
  StudyKind kind = StudyKind::ErrorBound;
  std::size_t d = 8;
  GraphRecipe recipe = ErdosRenyi{0.25};
  /// Fixed graph shared by every replication; when absent the graph is drawn from the
  /// recipe with graph_seed, or per replication when redraw_graph is set.
  std::optional<DirectedGraph> graph;
  std::uint64_t graph_seed = 0;
  bool redraw_graph = false;

  DiffusionFamily diffusion = TanhClipped{100.0};
  double mu = 7.0;
  double beta = 2.0;
  double alpha = 2.0;

  double delta = 0.01;
  double horizon = 10.0;
  std::size_t substeps = 10;
  std::size_t burn_in_steps = 500;

  std::size_t replications = 100;
  std::uint64_t seed = 1;
  EstimatorKind estimator = EstimatorKind::ClosedForm;
  LassoOptions lasso{};
  Parallelism parallelism{};

  std::size_t n() const;
  NsdeSpec spec() const;
  /// Throws InvalidArgument when the configuration is inconsistent.
  void validate() const;
};

struct ReplicationRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t edges = 0;
  double squared_error = 0.0;         // |theta_hat - theta_0|^2 over all coordinates
  double per_coordinate_error = 0.0;  // the same divided by pi_d
  bool exact_recovery = false;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t false_reverse = 0;  // estimated (i, j) whose reverse (j, i) is a true edge while (i, j) is not
  double precision = 1.0;
  double recall = 1.0;
  std::size_t communities = 0;
  double agreement = 0.0;
  double lambda_max = 0.0;
  double lambda_selected = 0.0;
  double alpha_max_error = 0.0;  // max_i |alpha_hat_i - alpha| after refit
  double beta_mean_error = 0.0;  // mean over true edges of |beta_hat - beta| after refit (missing edge = 0)
  double margin_singular = 0.0;
  double margin_rowsum = 0.0;
  bool converged = true;
};

struct StudyReport {
  std::string name;
  StudyKind kind = StudyKind::ErrorBound;
  std::size_t d = 0;
  std::size_t edges = 0;  // of the shared graph (mean over replications when redrawn)
  std::size_t pi = 0;
  double horizon = 0.0;
  double delta = 0.0;
  std::size_t n = 0;
  double K = 0.0;
  double epsilon = 0.0;
  double bound = 0.0;
  std::vector<ReplicationRecord> replications;

  double mean_error = 0.0;
  double sd_error = 0.0;
  double mean_per_coordinate = 0.0;
  double sd_per_coordinate = 0.0;
  double recovery_rate = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double reverse_free_rate = 0.0;
  double community_success_rate = 0.0;  // 3 communities with agreement >= 0.9 (SBM)
  double mean_agreement = 0.0;
  std::vector<std::string> notes;
};

/// One row of the reference error table (used by the benchmark to print targets next to results).
struct ErrorTableRow {
  std::size_t d;
  std::size_t edges;
  std::size_t pi;
  double horizon;
  double K;
  double epsilon;
  double bound;
  double mean;
  double sd;
};
const std::vector<ErrorTableRow>& error_table_reference();

/// Bound proxy K * epsilon with K = pi / |E| and epsilon = |E| / (n delta).
double bound_proxy(std::size_t pi, std::size_t edges, std::size_t n, double delta);

// ---------------------------------------------------------------------------
// Reference graphs

struct ReferenceGraph {
  DirectedGraph graph;
  std::uint64_t seed;
};

/// First seed >= start whose Erdos-Renyi draw with p = edges / (d (d - 1)) has exactly
/// `edges` edges and a positive singular ergodicity margin for (mu, beta).
ReferenceGraph find_fixed_edge_graph(std::size_t d, std::size_t edges, double mu, double beta,
                                     std::uint64_t start = 0);

/// First seed >= start whose ER(p) draw has maximum in-degree `max_in_degree` and
/// tau_max(beta A) in [tau_low, tau_high].
ReferenceGraph find_er_reference(std::size_t d = 10, double p = 0.25, double beta = 2.0,
                                 std::size_t max_in_degree = 4, double tau_low = 5.0, double tau_high = 5.5,
                                 std::uint64_t start = 0);

// ---------------------------------------------------------------------------
// Studies

/// Ready-made configurations of the four studies.
StudyConfig error_table_config(std::size_t d, std::size_t edges, double horizon);
StudyConfig er_study_config();
StudyConfig polymer_study_config();
StudyConfig sbm_study_config();

/// True parameters on g: alpha, momentum mu and network beta in every slot.
ParamVector true_parameters(const StudyConfig& config, const DirectedGraph& g);

/// Replicates simulate -> estimate on the known graph and records |theta_hat - theta_0|^2.
StudyReport error_bound_study(const StudyConfig& config);

/// Replicates simulate -> adaptive lasso -> adjacency -> refit and records recovery.
StudyReport recovery_study(const StudyConfig& config);

/// Dispatches on config.kind.
StudyReport run_study(const StudyConfig& config);

/// One replication of the recovery pipeline (exposed for the reference-seed check).
ReplicationRecord recovery_replication(const StudyConfig& config, std::size_t index, LassoFit* fit_out = nullptr);

/// Number of communities found at each lambda of the path.
std::vector<std::size_t> cluster_lambda_curve(const LassoPath& path, double resolution = 1.0);

/// Confusion counts of an estimated adjacency against the truth.
struct EdgeConfusion {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t false_reverse = 0;
};
EdgeConfusion compare_adjacency(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

}  // namespace nsde
