#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nsde/graph.hpp"
#include "nsde/model.hpp"
#include "nsde/parallel.hpp"
#include "nsde/simulate.hpp"

namespace nsde {

/// Subset of increments of a path. Increment k (0-based) is X_{t_{k+1}} - X_{t_k};
/// ranges are half-open [begin, end) over k and must not overlap.
class IncrementSet {
 public:
  IncrementSet() = default;
  static IncrementSet all(std::size_t n) { return range(0, n); }
  static IncrementSet range(std::size_t begin, std::size_t end);
  /// Every increment in [0, n) outside [begin, end).
  static IncrementSet all_but(std::size_t n, std::size_t begin, std::size_t end);

  const std::vector<std::pair<std::size_t, std::size_t>>& ranges() const noexcept { return ranges_; }
  std::size_t count() const noexcept;

  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [b, e] : ranges_)
      for (std::size_t k = b; k < e; ++k) fn(k);
  }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

/// Negative quasi-log-likelihood (diagonal diffusion):
///   sum_i sum_j (dX^j - delta b_j(X_{t_{i-1}}))^2 / (2 delta sigma_j^2) + log sigma_j,
/// evaluated increment by increment. Throws DegenerateDiffusion, LayoutMismatch.
double quasi_loglik(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta);
double quasi_loglik(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                    const IncrementSet& increments);

/// Per-node sufficient statistics of the contrast. Because drifts are linear in beta and
/// sigma_i = alpha_i g(x_i), the contrast for node i collapses to
///   (S_i - 2 delta beta'h_i + delta^2 beta'G_i beta) / (2 delta alpha_i^2) + n log alpha_i + L_i
/// with G_i = sum phi phi'/g^2, h_i = sum phi dX/g^2, S_i = sum dX^2/g^2, L_i = sum log g.
class ContrastStats {
 public:
  struct Node {
    std::size_t alpha_slot = 0;
    std::vector<std::size_t> slots;  // drift parameter slots, design order
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
    double square_sum = 0.0;
    double log_shape_sum = 0.0;
  };

  /// One Hessian block: rows/cols `indices` = {alpha slot, drift slots...} of the flat vector.
  struct Block {
    std::vector<std::size_t> indices;
    Eigen::MatrixXd matrix;
  };

  ContrastStats(const SamplePath& path, const NsdeSpec& spec, const ParamLayout& layout, const DriftDesign& design,
                const IncrementSet& increments);

  std::size_t count() const noexcept { return count_; }
  double delta() const noexcept { return delta_; }
  std::size_t dimension() const noexcept { return dim_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  /// Statistics are sums over increments, so disjoint sets combine by addition.
  /// Throws LayoutMismatch when the two were built for different layouts.
  ContrastStats& operator+=(const ContrastStats& other);
  ContrastStats& operator-=(const ContrastStats& other);

  /// Quasi-likelihood; +inf when some alpha_i <= 0.
  double value(const Eigen::VectorXd& flat, Eigen::VectorXd* grad = nullptr) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& flat) const;
  std::vector<Block> hessian_blocks(const Eigen::VectorXd& flat) const;

  /// Stage-one contrast U(alpha) = sum_i [<C^-1, dX^2>/delta + log det C]; gradient in alpha slots only.
  double u_contrast(const Eigen::VectorXd& flat, Eigen::VectorXd* grad = nullptr) const;
  /// Stage-two contrast V(alpha, beta) = sum_i |dX - delta b|^2_{C^-1} / (2 delta); gradient in drift slots only.
  double v_contrast(const Eigen::VectorXd& flat, Eigen::VectorXd* grad = nullptr) const;

 private:
  std::vector<Node> nodes_;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  double delta_ = 0.0;
};

/// Exact unconstrained minimizer of the contrast: per node beta = G^-1 h / delta and
/// alpha^2 = Q(beta) / (n delta). Throws SingularGram.
Eigen::VectorXd joint_qmle_closed_form(const ContrastStats& stats, double rcond = 1e-13);

// ---------------------------------------------------------------------------

enum class FitMode { Joint, Adaptive };
enum class HessianKind { Analytic, Numerical };

struct FitOptions {
  FitMode mode = FitMode::Joint;
  std::size_t restarts = 5;  // total number of starts, the first one at init
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-8;
  std::uint64_t seed = 0;
  HessianKind hessian = HessianKind::Analytic;
  /// Holds the diffusion parameters fixed (joint mode then optimizes drift slots only).
  std::optional<Eigen::VectorXd> frozen_alpha;
  std::optional<IncrementSet> increments;
  Parallelism parallelism{};
};

struct FitResult {
  ParamVector theta_hat;
  std::vector<std::string> names;
  std::size_t pi_alpha = 0;
  double contrast_value = 0.0;
  Eigen::MatrixXd info_matrix;    // H_n, Hessian of the contrast at theta_hat
  Eigen::MatrixXd scaled_info;    // Gamma_n H_n Gamma_n
  Eigen::VectorXd rate_diagonal;  // diagonal of Gamma_n
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> trace;      // contrast along accepted steps of the best start
  std::size_t n = 0;
  double delta = 0.0;
  std::vector<std::string> warnings;

  /// sqrt(diag(Gamma (Gamma H Gamma)^-1 Gamma)); NaN entries when H is singular.
  Eigen::VectorXd standard_errors() const;
};

/// Gamma_n diagonal: n^-1/2 on alpha slots, (n delta)^-1/2 on drift and weight slots.
Eigen::VectorXd rate_matrix(std::size_t pi_alpha, std::size_t pi_total, std::size_t n, double delta);

/// Gamma_n H_n Gamma_n.
Eigen::MatrixXd scaled_information(const FitResult& fit, std::size_t n, double delta);

/// Quasi-likelihood estimator. The layout is augmented iff init carries weights, in which
/// case `g` is ignored and all ordered pairs are candidate edges. Non-convergence is
/// reported through FitResult::converged. Throws BoundsViolation when init is outside
/// the box, LayoutMismatch.
FitResult fit_qmle(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& init,
                   const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Linear drift, closed form

struct ClosedFormOptions {
  /// On a singular Gram matrix add 1e-10 * trace / dim to the diagonal instead of throwing.
  bool allow_jitter = false;
  double singular_rcond = 1e-13;
  std::optional<IncrementSet> increments;
};

struct ClosedFormFit {
  /// beta block of the non-augmented Linear layout on g: [mu | network | intercepts].
  Eigen::VectorXd beta;
  /// Per node, regressors ordered (own, parents..., constant).
  std::vector<Eigen::MatrixXd> normal_matrices;  // <X X' / sigma^2>
  std::vector<Eigen::VectorXd> normal_rhs;       // <dX^j X / sigma^2>
  std::vector<double> condition_numbers;
  std::vector<std::size_t> jittered_nodes;
};

/// Per node j: beta^{N_j + j} = delta^-1 <X X'/sigma^2>^-1 <dX^j X/sigma^2> with
/// sigma_hat(i, j) = sigma_j at t_i (row i pairs with increment i). The own-column
/// coefficient is returned as -mu_j. Throws SingularGram, DimensionMismatch.
ClosedFormFit fit_linear_closed_form(const SamplePath& path, const DirectedGraph& g, const Eigen::MatrixXd& sigma_hat,
                                     bool intercepts, const ClosedFormOptions& options = {});

/// Minimizer of the stage-one contrast: alpha_i^2 = mean(dX_i^2 / (delta g(x_i)^2)).
Eigen::VectorXd stage_one_alpha(const SamplePath& path, const NsdeSpec& spec,
                                const std::optional<IncrementSet>& increments = std::nullopt);

/// n x d matrix of alpha_j g(X^j_{t_i}), i = 0..n-1.
Eigen::MatrixXd sigma_hat_matrix(const SamplePath& path, const NsdeSpec& spec, const Eigen::VectorXd& alpha);

/// Stage-one alpha followed by the closed form (on the complete graph when augmented).
/// Requires a Linear drift.
ParamVector linear_pilot(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, bool augmented,
                         const std::optional<IncrementSet>& increments = std::nullopt);

}  // namespace nsde
