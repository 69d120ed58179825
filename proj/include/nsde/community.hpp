#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "nsde/graph.hpp"

namespace nsde {

/// Louvain modularity maximization on the symmetrized weights W = A + A^T: local moves in
/// vertex order, then aggregation, until a level produces no move. Labels are numbered
/// by first appearance in vertex order. Deterministic.
std::vector<std::size_t> detect_communities(const DirectedGraph& g, double resolution = 1.0);
/// Same on a non-negative weight matrix, symmetrized the same way.
std::vector<std::size_t> detect_communities(const Eigen::MatrixXd& weights, double resolution = 1.0);

/// Newman modularity of `labels` on the symmetrized weights of g.
double modularity(const DirectedGraph& g, const std::vector<std::size_t>& labels, double resolution = 1.0);
double modularity(const Eigen::MatrixXd& weights, const std::vector<std::size_t>& labels, double resolution = 1.0);

std::size_t community_count(const std::vector<std::size_t>& labels);

/// Fraction of vertices whose label matches the truth under the best one-to-one map
/// from found communities to true ones. Throws DimensionMismatch.
double agreement(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& truth);

}  // namespace nsde
