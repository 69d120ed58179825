#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsde/estimate.hpp"
#include "nsde/model.hpp"
#include "nsde/parallel.hpp"
#include "nsde/simulate.hpp"

namespace nsde {

// ---------------------------------------------------------------------------
// Adaptive weights

struct AdaptiveWeights {
  Eigen::VectorXd gamma_alpha;
  Eigen::VectorXd gamma_beta;
  Eigen::VectorXd gamma_w;
  bool penalize_alpha = false;
  bool penalize_beta = false;
  std::array<double, 3> delta{1.0, 1.0, 1.0};
  double cap = 1e12;

  /// Weights in flat parameter order.
  Eigen::VectorXd flat() const;
  /// Penalized coordinates in flat order: alpha and beta blocks per flag, w always.
  std::vector<bool> penalized() const;
};

/// gamma = min(|pilot|^-delta, cap) with |pilot| floored at `floor`; the alpha and beta
/// blocks are zero unless penalized. Throws InvalidArgument for delta <= 0 or cap <= 0.
AdaptiveWeights adaptive_weights(const ParamVector& pilot, std::array<double, 3> delta = {1.0, 1.0, 1.0},
                                 double cap = 1e12, bool penalize_alpha = false, bool penalize_beta = false,
                                 double floor = 1e-12);

// ---------------------------------------------------------------------------
// Least-squares approximation (LSA) problems

/// min_theta 1/2 (theta - pilot)' H (theta - pilot) + lambda sum_k gamma_k |theta_k|
/// subject to lower <= theta <= upper. Coordinates with penalized[k] == false carry no
/// penalty whatever gamma_k says.
struct LsaProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd pilot;
  Eigen::VectorXd gamma;
  std::vector<bool> penalized;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  /// Unbounded problem with every coordinate penalized.
  static LsaProblem make(Eigen::MatrixXd H, Eigen::VectorXd pilot, Eigen::VectorXd gamma);
  std::size_t size() const noexcept { return static_cast<std::size_t>(pilot.size()); }
  double weight(std::size_t k) const noexcept { return penalized[k] ? gamma(static_cast<Eigen::Index>(k)) : 0.0; }
};

struct LsaOptions {
  /// Max coordinate change per sweep; <= 0 means 1e-10 (1 + |pilot|_inf).
  double tolerance = 0.0;
  std::size_t max_sweeps = 10000;
};

struct LsaResult {
  Eigen::VectorXd theta;
  std::size_t sweeps = 0;
  double kkt_residual = 0.0;
  double objective = 0.0;
};

double lsa_objective(const LsaProblem& problem, const Eigen::VectorXd& theta, double lambda);

/// Largest violation of the subgradient optimality conditions (box-aware).
double kkt_residual(const LsaProblem& problem, const Eigen::VectorXd& theta, double lambda);

/// Cyclic coordinate descent with exact scalar updates, clipped to the box.
/// Throws NonPSD (negative diagonal), NonConvergence.
LsaResult lsa_solve(const LsaProblem& problem, double lambda, const LsaOptions& options = {},
                    const Eigen::VectorXd* warm_start = nullptr);

/// Smallest lambda at which every penalized coordinate is zero, certified by one solve
/// at the returned value. Throws ZeroWeight.
double lambda_max(const LsaProblem& problem);

/// LSA whose Hessian is block diagonal: each block is solved on its own with the shared
/// lambda, which gives the same minimizer as the dense problem.
struct BlockLsa {
  std::size_t dimension = 0;
  std::vector<std::vector<std::size_t>> indices;
  std::vector<LsaProblem> blocks;

  static BlockLsa dense(LsaProblem problem);
  /// Splits H along the given index groups (which must partition [0, dim)).
  static BlockLsa from_groups(const Eigen::MatrixXd& H, const Eigen::VectorXd& pilot, const Eigen::VectorXd& gamma,
                              const std::vector<bool>& penalized, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, const std::vector<std::vector<std::size_t>>& groups);

  Eigen::VectorXd pilot() const;
};

LsaResult lsa_solve(const BlockLsa& problem, double lambda, const LsaOptions& options = {},
                    const Eigen::VectorXd* warm_start = nullptr);
double lambda_max(const BlockLsa& problem);

/// Symmetric part of H with eigenvalues clipped at 1e-10 * max eigenvalue.
/// Sets *clipped when anything changed.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& H, bool* clipped = nullptr);

// ---------------------------------------------------------------------------
// Paths and selection

struct GridSpec {
  std::size_t count = 50;
  double min_fraction = 1e-3;
};

struct PathOptions {
  LsaOptions lsa{};
  /// Solve grid points cold-started in parallel instead of warm-started in sequence.
  bool parallel_cold = false;
  Parallelism parallelism{};
};

struct LassoPath {
  std::vector<double> lambdas;  // decreasing
  std::vector<ParamVector> coefficients;
  std::vector<std::size_t> active_counts;  // nonzero penalized coordinates
  std::vector<Eigen::MatrixXd> adjacency;
  std::vector<double> kkt_residuals;
  std::optional<std::vector<double>> validation_loss;
  std::optional<std::vector<double>> validation_se;
  double lambda_max = 0.0;
  /// Grid indices where the active count dropped although lambda decreased.
  std::vector<std::size_t> monotonicity_violations;
};

std::vector<double> lambda_grid(double lambda_max, const GridSpec& grid);

/// Log-spaced grid from lambda_max down to min_fraction * lambda_max. The layout must be
/// augmented so that adjacency can be read from the w block. Throws InvalidArgument.
LassoPath lambda_path(const BlockLsa& problem, const ParamLayout& layout, const GridSpec& grid = {},
                      const PathOptions& options = {});

struct SelectionRule {
  enum class Kind { Min, HalfSe, FixedFraction };
  Kind kind = Kind::HalfSe;
  double fraction = 0.1;

  static SelectionRule min() { return {Kind::Min, 0.0}; }
  static SelectionRule half_se() { return {Kind::HalfSe, 0.0}; }
  static SelectionRule fixed_fraction(double f) { return {Kind::FixedFraction, f}; }
};

std::string to_string(const SelectionRule& rule);

/// Throws MissingValidationLoss when the rule needs a loss the path does not carry.
double select_lambda(const LassoPath& path, const SelectionRule& rule);

struct ValidationScheme {
  enum class Kind { HoldoutTail, BlockedKFold };
  Kind kind = Kind::BlockedKFold;
  std::size_t folds = 5;
  double holdout_fraction = 0.2;

  static ValidationScheme holdout_tail(double fraction) { return {Kind::HoldoutTail, 0, fraction}; }
  static ValidationScheme blocked_kfold(std::size_t k) { return {Kind::BlockedKFold, k, 0.0}; }
};

struct ValidationLoss {
  std::vector<double> loss;  // mean contrast per held-out increment
  std::vector<double> se;
  std::vector<std::string> warnings;
};

/// Contiguous held-out blocks of increments: the k folds, or the tail split into 10
/// sub-blocks. Throws InsufficientData when a block is empty.
std::vector<IncrementSet> validation_blocks(std::size_t n, const ValidationScheme& scheme);

/// Evaluates fixed parameter vectors on the held-out blocks (no refitting): per-block mean
/// contrast, averaged over blocks, with the standard error across blocks.
ValidationLoss validation_loss(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g,
                               const std::vector<ParamVector>& thetas, const ValidationScheme& scheme);

/// Adjacency with A_ij = 1 iff i != j and |w_ij| > zero_tol.
Eigen::MatrixXd estimate_adjacency(const Eigen::VectorXd& w_hat, std::size_t d, double zero_tol = 0.0);

/// Refits the non-augmented model on the graph read from A_hat without penalty.
FitResult two_step_refit(const SamplePath& path, const NsdeSpec& spec, const Eigen::MatrixXd& A_hat,
                         const FitOptions& options = {});

// ---------------------------------------------------------------------------
// End-to-end pipeline

struct LassoOptions {
  std::array<double, 3> delta{1.0, 1.0, 1.0};
  double cap = 1e12;
  bool penalize_alpha = false;
  bool penalize_beta = false;
  HessianKind hessian = HessianKind::Analytic;
  GridSpec grid{};
  SelectionRule rule = SelectionRule::half_se();
  ValidationScheme validation{};
  /// Compute validation losses even when the rule does not need them.
  bool always_validate = false;
  double zero_tol = 0.0;
  bool refit = true;
  FitOptions refit_options{};
  PathOptions path_options{};
};

struct LassoFit {
  ParamVector pilot;
  AdaptiveWeights weights;
  LassoPath path;
  double lambda_selected = 0.0;
  ParamVector theta_selected;
  Eigen::MatrixXd adjacency;
  std::optional<FitResult> refit;
  std::vector<std::string> warnings;
};

/// Pieces shared by the pipeline and the fold refits.
struct LsaSetup {
  ParamVector pilot;
  AdaptiveWeights weights;
  BlockLsa problem;
  bool psd_clipped = false;
};

/// Pilot (exact joint QMLE on the augmented model), adaptive weights, and the per-node
/// block LSA built from the contrast Hessian at the pilot.
LsaSetup build_lsa(const ContrastStats& stats, const NsdeSpec& spec, const ParamLayout& layout,
                   const LassoOptions& options);

/// Blocked cross-validation with refits: each fold's complement gets its own pilot,
/// weights and Hessian; the full-data grid is rescaled by n_train / n.
ValidationLoss cross_validate(const SamplePath& path, const NsdeSpec& spec, const std::vector<double>& lambdas,
                              const LassoOptions& options);

/// simulate-free part of the recovery pipeline: pilot -> weights -> path -> selection
/// -> adjacency -> optional two-step refit.
LassoFit fit_adaptive_lasso(const SamplePath& path, const NsdeSpec& spec, const LassoOptions& options = {});

}  // namespace nsde
