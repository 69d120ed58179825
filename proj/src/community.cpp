#include "nsde/community.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "nsde/error.hpp"

namespace nsde {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& w) {
  if (w.rows() != w.cols()) throw Error(ErrorCode::NonSquare, "weight matrix");
  if ((w.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "negative edge weight");
  return w + w.transpose();
}

std::vector<std::size_t> relabel(const std::vector<std::size_t>& labels) {
  std::map<std::size_t, std::size_t> seen;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto it = seen.try_emplace(labels[i], seen.size()).first;
    out[i] = it->second;
  }
  return out;
}

// One level of local moves. Returns true when any vertex changed community.
bool local_moves(const Eigen::MatrixXd& W, double m2, double resolution, std::vector<std::size_t>& comm) {
  const auto n = static_cast<std::size_t>(W.rows());
  const Eigen::VectorXd k = W.rowwise().sum();
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) total[comm[i]] += k(static_cast<Eigen::Index>(i));

  bool moved_any = false;
  std::vector<double> link(n, 0.0);
  std::vector<std::size_t> touched;
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const std::size_t own = comm[i];
      touched.clear();
      for (std::size_t j = 0; j < n; ++j) {
        const double wij = W(ii, static_cast<Eigen::Index>(j));
        if (j == i || wij == 0.0) continue;
        if (link[comm[j]] == 0.0) touched.push_back(comm[j]);
        link[comm[j]] += wij;
      }
      total[own] -= k(ii);
      const auto score = [&](std::size_t c) { return link[c] - resolution * total[c] * k(ii) / m2; };
      std::size_t best = own;
      double best_score = score(own);
      for (const std::size_t c : touched) {
        const double s = score(c);
        if (s > best_score + 1e-12 * (1.0 + std::abs(best_score))) {
          best = c;
          best_score = s;
        }
      }
      total[best] += k(ii);
      for (const std::size_t c : touched) link[c] = 0.0;
      link[own] = 0.0;
      if (best != own) {
        comm[i] = best;
        moved = true;
        moved_any = true;
      }
    }
  }
  return moved_any;
}

}  // namespace

std::vector<std::size_t> detect_communities(const Eigen::MatrixXd& weights, double resolution) {
  const Eigen::MatrixXd W0 = symmetrize(weights);
  const auto d = static_cast<std::size_t>(W0.rows());
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "empty graph");
  std::vector<std::size_t> labels(d);
  for (std::size_t i = 0; i < d; ++i) labels[i] = i;
  const double m2 = W0.sum();
  if (m2 == 0.0) return labels;

  Eigen::MatrixXd W = W0;
  for (;;) {
    const auto n = static_cast<std::size_t>(W.rows());
    std::vector<std::size_t> comm(n);
    for (std::size_t i = 0; i < n; ++i) comm[i] = i;
    if (!local_moves(W, m2, resolution, comm)) break;
    comm = relabel(comm);
    const std::size_t groups = *std::max_element(comm.begin(), comm.end()) + 1;
    for (auto& l : labels) l = comm[l];
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(groups), static_cast<Eigen::Index>(groups));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        next(static_cast<Eigen::Index>(comm[i]), static_cast<Eigen::Index>(comm[j])) +=
            W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (groups == n) break;
    W = std::move(next);
  }
  return relabel(labels);
}

std::vector<std::size_t> detect_communities(const DirectedGraph& g, double resolution) {
  return detect_communities(g.adjacency(), resolution);
}

double modularity(const Eigen::MatrixXd& weights, const std::vector<std::size_t>& labels, double resolution) {
  const Eigen::MatrixXd W = symmetrize(weights);
  if (labels.size() != static_cast<std::size_t>(W.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "one label per vertex expected");
  }
  const double m2 = W.sum();
  if (m2 == 0.0) return 0.0;
  const Eigen::VectorXd k = W.rowwise().sum();
  double q = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
        q += W(i, j) - resolution * k(i) * k(j) / m2;
  return q / m2;
}

double modularity(const DirectedGraph& g, const std::vector<std::size_t>& labels, double resolution) {
  return modularity(g.adjacency(), labels, resolution);
}

std::size_t community_count(const std::vector<std::size_t>& labels) {
  std::vector<std::size_t> s = labels;
  std::sort(s.begin(), s.end());
  return static_cast<std::size_t>(std::unique(s.begin(), s.end()) - s.begin());
}

double agreement(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& truth) {
  if (labels.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "label vectors differ in length");
  if (labels.empty()) return 1.0;
  const auto a = relabel(labels);
  const auto b = relabel(truth);
  const std::size_t na = community_count(a);
  const std::size_t nb = community_count(b);
  std::vector<std::vector<std::size_t>> overlap(na, std::vector<std::size_t>(nb, 0));
  for (std::size_t i = 0; i < a.size(); ++i) ++overlap[a[i]][b[i]];

  std::size_t best = 0;
  if (nb <= 16) {
    // dp[mask] = best matched count using true communities in mask.
    std::vector<std::ptrdiff_t> dp(std::size_t{1} << nb, -1);
    dp[0] = 0;
    for (std::size_t p = 0; p < na; ++p) {
      std::vector<std::ptrdiff_t> next = dp;
      for (std::size_t mask = 0; mask < dp.size(); ++mask) {
        if (dp[mask] < 0) continue;
        for (std::size_t t = 0; t < nb; ++t) {
          if (mask & (std::size_t{1} << t)) continue;
          const std::size_t to = mask | (std::size_t{1} << t);
          next[to] = std::max(next[to], dp[mask] + static_cast<std::ptrdiff_t>(overlap[p][t]));
        }
      }
      dp = std::move(next);
    }
    best = static_cast<std::size_t>(*std::max_element(dp.begin(), dp.end()));
  } else {
    // Greedy on the largest overlaps; a lower bound on the optimum.
    std::vector<bool> used_a(na), used_b(nb);
    for (;;) {
      std::size_t bp = na, bt = nb, bv = 0;
      for (std::size_t p = 0; p < na; ++p)
        for (std::size_t t = 0; t < nb; ++t)
          if (!used_a[p] && !used_b[t] && overlap[p][t] > bv) {
            bp = p;
            bt = t;
            bv = overlap[p][t];
          }
      if (bv == 0) break;
      used_a[bp] = used_b[bt] = true;
      best += bv;
    }
  }
  return static_cast<double>(best) / static_cast<double>(labels.size());
}

}  // namespace nsde
