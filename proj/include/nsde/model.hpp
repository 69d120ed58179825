#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nsde/graph.hpp"

namespace nsde {

// ---------------------------------------------------------------------------
// Functional families
//
// Every family is linear in the drift parameters, b_i(x) = sum_k phi_ik(x) beta_k, and
// every diffusion is a per-node scale times a fixed shape, sigma_i(x) = alpha_i g(x_i).
// The estimators rely on both facts.

/// b_ii = -mu_i x_i (+ intercept), b_ij = beta_ij x_j.
struct LinearDrift {
  bool intercepts = false;
};

/// b_ii = -beta_{0,i} x_i, b_ij = sum_l beta_{l,ij} x_j (s_l + |x|)^-(q_l + 1)
/// with scales s_l > 0 and strictly increasing exponents q_l in [-1, 1].
struct RadialDictionary {
  std::vector<double> scales;
  std::vector<double> exponents;

  std::size_t size() const noexcept { return scales.size(); }
};

using DriftFamily = std::variant<LinearDrift, RadialDictionary>;

struct ConstantDiagonal {};

/// g(x_i) = c tanh(sqrt(1 + x_i^2) / c): smooth clip of sqrt(1 + x_i^2) at height c.
struct TanhClipped {
  double c = 100.0;
};

using DiffusionFamily = std::variant<ConstantDiagonal, TanhClipped>;

/// Box Theta. Signed parameters (momentum, network, weights, intercepts) share one
/// interval; diffusion scales have their own non-negative interval.
struct ParamBounds {
  double lower = -1e3;
  double upper = 1e3;
  double alpha_lower = 0.0;
  double alpha_upper = 1e3;
};

struct NsdeSpec {
  std::size_t d = 0;
  DriftFamily drift = LinearDrift{};
  DiffusionFamily diffusion = ConstantDiagonal{};
  ParamBounds bounds{};

  /// Throws InvalidArgument when a family invariant is broken.
  void validate() const;
  bool has_intercepts() const noexcept;
};

// ---------------------------------------------------------------------------
// Parameter layout

enum class SlotKind { Alpha, Momentum, Intercept, Network, Weight };

struct Slot {
  SlotKind kind;
  std::size_t node = 0;   // owning vertex (the child for Network / Weight)
  std::size_t other = 0;  // parent vertex for Network / Weight
  std::size_t basis = 0;  // dictionary element for Network slots (0 for linear)
};

/// Flat parameter order is [alpha | beta | w]. beta holds momenta, then network
/// coefficients (edge-major within each dictionary element), then intercepts.
/// In augmented mode the network block is dropped and w holds one weight per ordered
/// pair (i, j), i != j, row-major.
class ParamLayout {
 public:
  ParamLayout(const NsdeSpec& spec, const DirectedGraph& g, bool augmented);

  std::size_t d() const noexcept { return d_; }
  std::size_t edge_count() const noexcept { return edge_count_; }
  bool augmented() const noexcept { return augmented_; }
  std::size_t pi_alpha() const noexcept { return pi_alpha_; }
  std::size_t pi_beta() const noexcept { return pi_beta_; }
  std::size_t pi_w() const noexcept { return pi_w_; }
  std::size_t pi_total() const noexcept { return pi_alpha_ + pi_beta_ + pi_w_; }

  /// |G_d| = d + |E| of the graph the layout was built on.
  std::size_t graph_size() const noexcept { return d_ + edge_count_; }
  /// pi_total / |G_d|; assumption (G1) bounds this by K.
  double k_ratio() const noexcept { return static_cast<double>(pi_total()) / graph_size(); }
  /// |G_d| / (n delta); assumption (G2) asks this to vanish.
  double epsilon_ratio(std::size_t n, double delta) const noexcept {
    return static_cast<double>(graph_size()) / (static_cast<double>(n) * delta);
  }

  const std::vector<Slot>& slots() const noexcept { return slots_; }
  const Slot& slot(std::size_t k) const { return slots_.at(k); }
  std::string name(std::size_t k) const;

  std::size_t alpha_slot(std::size_t node) const noexcept { return node; }
  std::size_t momentum_slot(std::size_t node) const noexcept { return pi_alpha_ + node; }
  std::optional<std::size_t> intercept_slot(std::size_t node) const noexcept;
  /// Flat slot of network coefficient for edge index e and dictionary element l.
  std::size_t network_slot(std::size_t edge, std::size_t basis = 0) const noexcept {
    return pi_alpha_ + d_ + basis * edge_count_ + edge;
  }
  /// Flat slot of w_ij (augmented layouts only).
  std::size_t weight_slot(std::size_t i, std::size_t j) const noexcept {
    return pi_alpha_ + pi_beta_ + i * (d_ - 1) + (j < i ? j : j - 1);
  }

  bool is_alpha(std::size_t k) const noexcept { return k < pi_alpha_; }

 private:
  std::size_t d_;
  std::size_t edge_count_;
  bool augmented_;
  std::size_t basis_count_;
  bool intercepts_;
  std::size_t pi_alpha_ = 0;
  std::size_t pi_beta_ = 0;
  std::size_t pi_w_ = 0;
  std::vector<Slot> slots_;
};

ParamLayout parameter_layout(const NsdeSpec& spec, const DirectedGraph& g, bool augmented);

struct ParamVector {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  std::optional<Eigen::VectorXd> w;

  bool augmented() const noexcept { return w.has_value(); }
  Eigen::VectorXd flatten() const;
  /// Throws LayoutMismatch when the flat size differs from the layout.
  static ParamVector unflatten(const ParamLayout& layout, const Eigen::VectorXd& flat);
};

/// Throws LayoutMismatch when block sizes disagree with the layout.
void check_layout(const ParamLayout& layout, const ParamVector& theta);

/// Same value in every slot of each kind (dictionary network slots all get `network`).
ParamVector uniform_params(const ParamLayout& layout, double alpha, double momentum, double network,
                           double intercept = 0.0);

/// Copies a non-augmented Linear parameter vector on graph g into the augmented
/// layout: w_ij = beta_ij on edges of g and 0 elsewhere.
ParamVector to_augmented(const ParamVector& theta, const ParamLayout& layout, const DirectedGraph& g);

/// Lower/upper box vectors in flat order.
std::pair<Eigen::VectorXd, Eigen::VectorXd> box_bounds(const NsdeSpec& spec, const ParamLayout& layout);

// ---------------------------------------------------------------------------
// Evaluation

/// Per-node list of drift regressors: b_i(x) = sum over terms of feature(x) * theta[slot].
class DriftDesign {
 public:
  enum class Feature { NegOwn, Parent, Constant };
  struct Term {
    std::size_t slot;
    Feature feature;
    std::size_t parent = 0;
    std::size_t basis = 0;
  };

  DriftDesign(const NsdeSpec& spec, const DirectedGraph& g, const ParamLayout& layout);

  std::size_t d() const noexcept { return terms_.size(); }
  const std::vector<Term>& terms(std::size_t node) const { return terms_.at(node); }
  std::size_t max_terms() const noexcept { return max_terms_; }

  /// Dictionary multipliers (s_l + |x|)^-(q_l+1) for state x (empty for linear drift).
  void basis_factors(std::span<const double> x, std::vector<double>& out) const;
  /// Regressor values for `node` at state x; `factors` comes from basis_factors(x).
  void features(std::span<const double> x, std::size_t node, std::span<const double> factors,
                std::span<double> out) const;
  /// Full drift vector at x for flat parameters.
  void drift(std::span<const double> x, const Eigen::VectorXd& flat, std::span<double> out,
             std::vector<double>& scratch) const;

 private:
  std::vector<std::vector<Term>> terms_;
  std::vector<double> scales_;
  std::vector<double> exponents_;
  std::size_t max_terms_ = 0;
};

/// Shape g(x_i) of the diffusion so that sigma_i = alpha_i g(x_i).
double diffusion_shape(const DiffusionFamily& family, double xi) noexcept;

/// Throws LayoutMismatch, NonFiniteState.
Eigen::VectorXd drift_eval(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                           const Eigen::VectorXd& x);

/// Diagonal of sigma at x. Throws NegativeAlpha, DimensionMismatch.
Eigen::VectorXd diffusion_eval(const NsdeSpec& spec, const Eigen::VectorXd& alpha, const Eigen::VectorXd& x);

}  // namespace nsde
