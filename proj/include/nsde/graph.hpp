#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nsde {

/// Directed edge (child, parent): `parent` belongs to N_child and x_parent enters the
/// drift of x_child. Row `child` of the adjacency matrix lists the parents of `child`.
struct Edge {
  std::size_t child = 0;
  std::size_t parent = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Validated directed graph on vertices {0, ..., d-1}. Immutable once built.
class DirectedGraph {
 public:
  /// Throws IndexOutOfRange, SelfLoop or DuplicateEdge.
  DirectedGraph(std::size_t d, std::vector<Edge> edges);

  std::size_t d() const noexcept { return d_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  /// |G_d| = d + |E_d|
  std::size_t size() const noexcept { return d_ + edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  /// Parents of `node` (N_node) in edge-list order.
  const std::vector<std::size_t>& parents(std::size_t node) const { return parents_.at(node); }
  /// Position of edge (child, parent) in edges(), or -1.
  std::ptrdiff_t edge_index(std::size_t child, std::size_t parent) const noexcept;
  bool has_edge(std::size_t child, std::size_t parent) const noexcept {
    return edge_index(child, parent) >= 0;
  }

  Eigen::MatrixXd adjacency() const;

  static DirectedGraph complete(std::size_t d);
  static DirectedGraph empty(std::size_t d) { return DirectedGraph(d, {}); }
  /// Graph whose edges are the nonzero off-diagonal entries of a d x d 0/1 matrix.
  static DirectedGraph from_adjacency(const Eigen::MatrixXd& adjacency);

  friend bool operator==(const DirectedGraph& a, const DirectedGraph& b) {
    return a.d_ == b.d_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t d_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> parents_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> index_;
};

DirectedGraph build_graph(std::size_t d, const std::vector<std::pair<std::size_t, std::size_t>>& edges);

// ---------------------------------------------------------------------------
// Random generators

struct ErdosRenyi {
  double p = 0.0;
};

/// Chain k -> k+1 (edge (k+1, k)) for every k, plus the reverse edge (k, k+1) at
/// each listed chain position.
struct Polymer {
  std::vector<std::size_t> double_link_positions;

  /// Every third chain position: {0, 3, 6, ...} below d-1.
  static Polymer every_third(std::size_t d);
};

struct StochasticBlock {
  std::vector<std::size_t> block_sizes;
  double p_in = 0.0;
  double p_ex = 0.0;

  /// Block index of each vertex, in vertex order.
  std::vector<std::size_t> memberships() const;
};

using GraphRecipe = std::variant<ErdosRenyi, Polymer, StochasticBlock>;

/// Deterministic in (recipe, d, seed). Throws InvalidProbability, BlockSizeMismatch,
/// IndexOutOfRange (polymer positions outside the chain).
DirectedGraph generate(const GraphRecipe& recipe, std::size_t d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ergodicity certificates for the linear drift -diag(mu) x + B x

enum class MarginMode { Singular, RowSum };

/// Largest singular value by power iteration on B^T B (relative tolerance 1e-10,
/// at most 10000 iterations); falls back to a dense eigen-solve for d <= 64 when the
/// iteration does not settle.
double largest_singular_value(const Eigen::MatrixXd& B);

/// min_i mu_i - tau_max(B) (Singular) or min_i mu_i - max_i sum_j B_ij (RowSum).
/// A positive value certifies the sufficient drift condition for ergodicity; a
/// non-positive value is inconclusive. RowSum is only a valid certificate for
/// non-negative symmetric B; checking that is the caller's job.
/// Throws NonSquare, DimensionMismatch.
double ergodicity_margin(const Eigen::VectorXd& mu, const Eigen::MatrixXd& B, MarginMode mode);

// ---------------------------------------------------------------------------

struct DegreeHistogram {
  std::vector<std::size_t> in_degrees;   // number of parents
  std::vector<std::size_t> out_degrees;  // number of children
  std::map<std::size_t, std::size_t> histogram;  // total degree -> vertex count
};

DegreeHistogram degree_distribution(const DirectedGraph& g);

}  // namespace nsde
