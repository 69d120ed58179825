#include "nsde/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nsde/error.hpp"
#include "nsde/rng.hpp"

namespace nsde {

DirectedGraph::DirectedGraph(std::size_t d, std::vector<Edge> edges)
    : d_(d), edges_(std::move(edges)), parents_(d) {
  if (d_ == 0) throw Error(ErrorCode::InvalidArgument, "graph needs at least one vertex");
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto [child, parent] = edges_[k];
    if (child >= d_ || parent >= d_) {
      throw Error(ErrorCode::IndexOutOfRange, "edge (" + std::to_string(child) + ", " +
                                                  std::to_string(parent) + ") with d=" + std::to_string(d_));
    }
    if (child == parent) throw Error(ErrorCode::SelfLoop, "vertex " + std::to_string(child));
    if (!index_.emplace(std::pair{child, parent}, k).second) {
      throw Error(ErrorCode::DuplicateEdge,
                  "(" + std::to_string(child) + ", " + std::to_string(parent) + ")");
    }
    parents_[child].push_back(parent);
  }
}

std::ptrdiff_t DirectedGraph::edge_index(std::size_t child, std::size_t parent) const noexcept {
  const auto it = index_.find({child, parent});
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

Eigen::MatrixXd DirectedGraph::adjacency() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d_, d_);
  for (const auto& e : edges_) A(e.child, e.parent) = 1.0;
  return A;
}

DirectedGraph DirectedGraph::complete(std::size_t d) {
  std::vector<Edge> edges;
  edges.reserve(d * (d - 1));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j) edges.push_back({i, j});
  return DirectedGraph(d, std::move(edges));
}

DirectedGraph DirectedGraph::from_adjacency(const Eigen::MatrixXd& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw Error(ErrorCode::NonSquare, "adjacency matrix");
  const auto d = static_cast<std::size_t>(adjacency.rows());
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j && adjacency(i, j) != 0.0) edges.push_back({i, j});
  return DirectedGraph(d, std::move(edges));
}

DirectedGraph build_graph(std::size_t d, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<Edge> list;
  list.reserve(edges.size());
  for (const auto& [i, j] : edges) list.push_back({i, j});
  return DirectedGraph(d, std::move(list));
}

Polymer Polymer::every_third(std::size_t d) {
  Polymer p;
  for (std::size_t k = 0; k + 1 < d; k += 3) p.double_link_positions.push_back(k);
  return p;
}

std::vector<std::size_t> StochasticBlock::memberships() const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < block_sizes.size(); ++b) out.insert(out.end(), block_sizes[b], b);
  return out;
}

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::InvalidProbability, std::string(name) + " = " + std::to_string(p));
  }
}

// Each ordered pair (i, j) gets its own counter so the draw for a pair does not
// depend on the iteration order.
bool draw_pair(std::uint64_t seed, std::size_t d, std::size_t i, std::size_t j, double p) {
  return counter_uniform(seed, static_cast<std::uint64_t>(i) * d + j, 7u) < p;
}

}  // namespace

DirectedGraph generate(const GraphRecipe& recipe, std::size_t d, std::uint64_t seed) {
  std::vector<Edge> edges;
  if (const auto* er = std::get_if<ErdosRenyi>(&recipe)) {
    check_probability(er->p, "p");
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j && draw_pair(seed, d, i, j, er->p)) edges.push_back({i, j});
  } else if (const auto* poly = std::get_if<Polymer>(&recipe)) {
    for (std::size_t k = 0; k + 1 < d; ++k) edges.push_back({k + 1, k});
    std::vector<std::size_t> positions = poly->double_link_positions;
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    for (const auto k : positions) {
      if (k + 1 >= d) {
        throw Error(ErrorCode::IndexOutOfRange, "double link position " + std::to_string(k) +
                                                    " outside chain of length " + std::to_string(d));
      }
      edges.push_back({k, k + 1});
    }
  } else {
    const auto& sbm = std::get<StochasticBlock>(recipe);
    check_probability(sbm.p_in, "p_in");
    check_probability(sbm.p_ex, "p_ex");
    const auto total = std::accumulate(sbm.block_sizes.begin(), sbm.block_sizes.end(), std::size_t{0});
    if (total != d) {
      throw Error(ErrorCode::BlockSizeMismatch,
                  "block sizes sum to " + std::to_string(total) + ", d=" + std::to_string(d));
    }
    const auto block = sbm.memberships();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j && draw_pair(seed, d, i, j, block[i] == block[j] ? sbm.p_in : sbm.p_ex))
          edges.push_back({i, j});
  }
  return DirectedGraph(d, std::move(edges));
}

double largest_singular_value(const Eigen::MatrixXd& B) {
  const Eigen::Index n = B.cols();
  if (n == 0 || B.rows() == 0) return 0.0;
  const Eigen::MatrixXd BtB = B.transpose() * B;
  if (BtB.squaredNorm() == 0.0) return 0.0;

  SeededStream stream(0x5eed);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = stream.normal();
  v.normalize();

  double lambda = 0.0;
  bool settled = false;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = BtB * v;
    const double norm = w.norm();
    if (norm == 0.0) {
      // Start vector fell into the null space; restart from a fresh direction.
      for (Eigen::Index i = 0; i < n; ++i) v(i) = stream.normal();
      v.normalize();
      continue;
    }
    const double next = v.dot(w);
    v = w / norm;
    if (it > 0 && std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
      lambda = next;
      settled = true;
      break;
    }
    lambda = next;
  }
  if (!settled && n <= 64) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(BtB, Eigen::EigenvaluesOnly);
    lambda = eig.eigenvalues().maxCoeff();
  }
  return std::sqrt(std::max(lambda, 0.0));
}

double ergodicity_margin(const Eigen::VectorXd& mu, const Eigen::MatrixXd& B, MarginMode mode) {
  if (B.rows() != B.cols()) throw Error(ErrorCode::NonSquare, "B must be square");
  if (mu.size() != B.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "mu has " + std::to_string(mu.size()) + " entries, B is " + std::to_string(B.rows()) + "x" +
                    std::to_string(B.cols()));
  }
  if (mu.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty system");
  const double min_mu = mu.minCoeff();
  if (mode == MarginMode::Singular) return min_mu - largest_singular_value(B);
  return min_mu - B.rowwise().sum().maxCoeff();
}

DegreeHistogram degree_distribution(const DirectedGraph& g) {
  DegreeHistogram h;
  h.in_degrees.assign(g.d(), 0);
  h.out_degrees.assign(g.d(), 0);
  for (const auto& e : g.edges()) {
    ++h.in_degrees[e.child];
    ++h.out_degrees[e.parent];
  }
  for (std::size_t i = 0; i < g.d(); ++i) ++h.histogram[h.in_degrees[i] + h.out_degrees[i]];
  return h;
}

}  // namespace nsde
