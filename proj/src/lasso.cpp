#include "nsde/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nsde/error.hpp"
#include "nsde/optimize.hpp"

namespace nsde {

namespace {

Eigen::VectorXd block_weights(const Eigen::VectorXd& x, double delta, double cap, double floor) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double m = std::abs(x(k));
    g(k) = m < floor ? cap : std::min(std::pow(m, -delta), cap);
  }
  return g;
}

}  // namespace

AdaptiveWeights adaptive_weights(const ParamVector& pilot, std::array<double, 3> delta, double cap,
                                 bool penalize_alpha, bool penalize_beta, double floor) {
  for (const double d : delta)
    if (!(d > 0.0)) throw Error(ErrorCode::InvalidArgument, "weight exponents must be positive");
  if (!(cap > 0.0)) throw Error(ErrorCode::InvalidArgument, "weight cap must be positive");
  AdaptiveWeights w;
  w.penalize_alpha = penalize_alpha;
  w.penalize_beta = penalize_beta;
  w.delta = delta;
  w.cap = cap;
  w.gamma_alpha = penalize_alpha ? block_weights(pilot.alpha, delta[0], cap, floor)
                                 : Eigen::VectorXd::Zero(pilot.alpha.size());
  w.gamma_beta = penalize_beta ? block_weights(pilot.beta, delta[1], cap, floor)
                               : Eigen::VectorXd::Zero(pilot.beta.size());
  w.gamma_w = pilot.w ? block_weights(*pilot.w, delta[2], cap, floor) : Eigen::VectorXd();
  return w;
}

Eigen::VectorXd AdaptiveWeights::flat() const {
  Eigen::VectorXd out(gamma_alpha.size() + gamma_beta.size() + gamma_w.size());
  out << gamma_alpha, gamma_beta, gamma_w;
  return out;
}

std::vector<bool> AdaptiveWeights::penalized() const {
  std::vector<bool> p;
  p.insert(p.end(), static_cast<std::size_t>(gamma_alpha.size()), penalize_alpha);
  p.insert(p.end(), static_cast<std::size_t>(gamma_beta.size()), penalize_beta);
  p.insert(p.end(), static_cast<std::size_t>(gamma_w.size()), true);
  return p;
}

// ---------------------------------------------------------------------------

LsaProblem LsaProblem::make(Eigen::MatrixXd H, Eigen::VectorXd pilot, Eigen::VectorXd gamma) {
  LsaProblem p;
  const auto n = pilot.size();
  p.H = std::move(H);
  p.pilot = std::move(pilot);
  p.gamma = std::move(gamma);
  p.penalized.assign(static_cast<std::size_t>(n), true);
  p.lower = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
  p.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  return p;
}

namespace {

void check_problem(const LsaProblem& p) {
  const auto n = p.pilot.size();
  if (p.H.rows() != n || p.H.cols() != n || p.gamma.size() != n || p.lower.size() != n || p.upper.size() != n ||
      p.penalized.size() != static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::DimensionMismatch, "LSA problem blocks have inconsistent sizes");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (p.H(k, k) < 0.0) throw Error(ErrorCode::NonPSD, "negative diagonal entry " + std::to_string(k));
    if (p.gamma(k) < 0.0) throw Error(ErrorCode::InvalidArgument, "negative penalty weight");
  }
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace

double lsa_objective(const LsaProblem& p, const Eigen::VectorXd& theta, double lambda) {
  const Eigen::VectorXd d = theta - p.pilot;
  double pen = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) pen += p.weight(k) * std::abs(theta(static_cast<Eigen::Index>(k)));
  return 0.5 * d.dot(p.H * d) + lambda * pen;
}

double kkt_residual(const LsaProblem& p, const Eigen::VectorXd& theta, double lambda) {
  const Eigen::VectorXd g = p.H * (theta - p.pilot);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double t = theta(i);
    const double w = lambda * p.weight(k);
    // 0 must lie in g + w d|t| + N_box(t); the residual is the distance to that interval.
    double lo = g(i), hi = g(i);
    if (t > 0.0) {
      lo += w;
      hi += w;
    } else if (t < 0.0) {
      lo -= w;
      hi -= w;
    } else {
      lo -= w;
      hi += w;
    }
    if (t <= p.lower(i)) lo = -std::numeric_limits<double>::infinity();
    if (t >= p.upper(i)) hi = std::numeric_limits<double>::infinity();
    worst = std::max({worst, lo, -hi});
  }
  return worst;
}

LsaResult lsa_solve(const LsaProblem& p, double lambda, const LsaOptions& options, const Eigen::VectorXd* warm) {
  check_problem(p);
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  const auto n = p.pilot.size();
  const double tol =
      options.tolerance > 0.0 ? options.tolerance : 1e-10 * (1.0 + (n ? p.pilot.lpNorm<Eigen::Infinity>() : 0.0));
  const double kkt_target = 1e-8 * (1.0 + lambda);

  Eigen::VectorXd theta = warm ? *warm : p.pilot;
  if (theta.size() != n) throw Error(ErrorCode::DimensionMismatch, "warm start has the wrong size");
  theta = theta.cwiseMax(p.lower).cwiseMin(p.upper);
  Eigen::VectorXd r = p.H * (theta - p.pilot);

  LsaResult out;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double hkk = p.H(k, k);
      const double w = lambda * p.weight(static_cast<std::size_t>(k));
      double next;
      if (hkk > 0.0) {
        next = soft_threshold(hkk * theta(k) - r(k), w) / hkk;
      } else {
        // Flat direction: only the penalty (if any) pins the coordinate.
        next = w > 0.0 ? 0.0 : theta(k);
      }
      next = std::clamp(next, p.lower(k), p.upper(k));
      const double step = next - theta(k);
      if (step != 0.0) {
        r.noalias() += p.H.col(k) * step;
        theta(k) = next;
        max_change = std::max(max_change, std::abs(step));
      }
    }
    out.sweeps = sweep;
    if (max_change < tol) {
      r = p.H * (theta - p.pilot);
      out.kkt_residual = kkt_residual(p, theta, lambda);
      if (out.kkt_residual <= kkt_target || max_change == 0.0) {
        out.theta = std::move(theta);
        out.objective = lsa_objective(p, out.theta, lambda);
        return out;
      }
    }
  }
  throw Error(ErrorCode::NonConvergence,
              "coordinate descent did not settle in " + std::to_string(options.max_sweeps) + " sweeps");
}

double lambda_max(const LsaProblem& p) {
  check_problem(p);
  bool any = false;
  LsaProblem restricted = p;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!p.penalized[k]) continue;
    if (!(p.gamma(static_cast<Eigen::Index>(k)) > 0.0)) {
      throw Error(ErrorCode::ZeroWeight, "penalized coordinate " + std::to_string(k) + " has zero weight");
    }
    any = true;
    const auto i = static_cast<Eigen::Index>(k);
    restricted.lower(i) = restricted.upper(i) = 0.0;
  }
  if (!any) return 0.0;
  const Eigen::VectorXd star = lsa_solve(restricted, 0.0).theta;
  const Eigen::VectorXd g = p.H * (star - p.pilot);
  double lam = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p.penalized[k]) {
      const auto i = static_cast<Eigen::Index>(k);
      lam = std::max(lam, std::abs(g(i)) / p.gamma(i));
    }
  if (lam == 0.0) return 0.0;

  // Rounding in the threshold test can leave a 1-ulp survivor; nudge until certified.
  for (int attempt = 0; attempt < 60; ++attempt) {
    const Eigen::VectorXd theta = lsa_solve(p, lam).theta;
    bool zero = true;
    for (std::size_t k = 0; k < p.size() && zero; ++k)
      if (p.penalized[k] && theta(static_cast<Eigen::Index>(k)) != 0.0) zero = false;
    if (zero) return lam;
    lam *= 1.0 + 1e-12 * std::pow(2.0, attempt);
  }
  throw Error(ErrorCode::NonConvergence, "could not certify lambda_max");
}

BlockLsa BlockLsa::dense(LsaProblem problem) {
  BlockLsa b;
  b.dimension = problem.size();
  b.indices.emplace_back(problem.size());
  std::iota(b.indices.back().begin(), b.indices.back().end(), std::size_t{0});
  b.blocks.push_back(std::move(problem));
  return b;
}

BlockLsa BlockLsa::from_groups(const Eigen::MatrixXd& H, const Eigen::VectorXd& pilot, const Eigen::VectorXd& gamma,
                               const std::vector<bool>& penalized, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const std::vector<std::vector<std::size_t>>& groups) {
  BlockLsa b;
  b.dimension = static_cast<std::size_t>(pilot.size());
  std::vector<int> seen(b.dimension, 0);
  for (const auto& grp : groups) {
    const auto m = static_cast<Eigen::Index>(grp.size());
    LsaProblem p;
    p.H.resize(m, m);
    p.pilot.resize(m);
    p.gamma.resize(m);
    p.lower.resize(m);
    p.upper.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const std::size_t gr = grp[static_cast<std::size_t>(r)];
      if (gr >= b.dimension) throw Error(ErrorCode::IndexOutOfRange, "block index outside the problem");
      ++seen[gr];
      const auto i = static_cast<Eigen::Index>(gr);
      for (Eigen::Index c = 0; c < m; ++c) p.H(r, c) = H(i, static_cast<Eigen::Index>(grp[static_cast<std::size_t>(c)]));
      p.pilot(r) = pilot(i);
      p.gamma(r) = gamma(i);
      p.lower(r) = lower(i);
      p.upper(r) = upper(i);
      p.penalized.push_back(penalized[gr]);
    }
    b.indices.push_back(grp);
    b.blocks.push_back(std::move(p));
  }
  if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
    throw Error(ErrorCode::InvalidArgument, "block groups must partition the coordinates");
  }
  return b;
}

Eigen::VectorXd BlockLsa::pilot() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dimension));
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t k = 0; k < indices[b].size(); ++k)
      out(static_cast<Eigen::Index>(indices[b][k])) = blocks[b].pilot(static_cast<Eigen::Index>(k));
  return out;
}

LsaResult lsa_solve(const BlockLsa& problem, double lambda, const LsaOptions& options, const Eigen::VectorXd* warm) {
  LsaResult out;
  out.theta.resize(static_cast<Eigen::Index>(problem.dimension));
  for (std::size_t b = 0; b < problem.blocks.size(); ++b) {
    const auto& idx = problem.indices[b];
    std::optional<Eigen::VectorXd> w;
    if (warm) {
      w.emplace(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k)
        (*w)(static_cast<Eigen::Index>(k)) = (*warm)(static_cast<Eigen::Index>(idx[k]));
    }
    const LsaResult r = lsa_solve(problem.blocks[b], lambda, options, w ? &*w : nullptr);
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.theta(static_cast<Eigen::Index>(idx[k])) = r.theta(static_cast<Eigen::Index>(k));
    out.sweeps = std::max(out.sweeps, r.sweeps);
    out.kkt_residual = std::max(out.kkt_residual, r.kkt_residual);
    out.objective += r.objective;
  }
  return out;
}

double lambda_max(const BlockLsa& problem) {
  double lam = 0.0;
  for (const auto& b : problem.blocks) lam = std::max(lam, lambda_max(b));
  return lam;
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& H, bool* clipped) {
  const Eigen::MatrixXd S = 0.5 * (H + H.transpose());
  if (clipped) *clipped = false;
  if (S.rows() == 0) return S;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  Eigen::VectorXd ev = eig.eigenvalues();
  if (ev.minCoeff() >= 0.0) return S;
  const double floor = 1e-10 * std::max(ev.maxCoeff(), 0.0);
  ev = ev.cwiseMax(floor);
  if (clipped) *clipped = true;
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------

std::vector<double> lambda_grid(double lmax, const GridSpec& grid) {
  if (grid.count < 2) throw Error(ErrorCode::InvalidArgument, "lambda grid needs at least 2 points");
  if (!(grid.min_fraction > 0.0 && grid.min_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "min_fraction must lie in (0, 1)");
  }
  if (!(lmax > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda_max must be positive");
  std::vector<double> out(grid.count);
  const double step = std::log(grid.min_fraction) / static_cast<double>(grid.count - 1);
  for (std::size_t k = 0; k < grid.count; ++k) out[k] = lmax * std::exp(step * static_cast<double>(k));
  out.front() = lmax;
  out.back() = lmax * grid.min_fraction;
  return out;
}

namespace {

Eigen::MatrixXd adjacency_from_flat(const ParamLayout& layout, const Eigen::VectorXd& flat, double zero_tol) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout.d()), static_cast<Eigen::Index>(layout.d()));
  for (std::size_t k = 0; k < layout.pi_total(); ++k) {
    const Slot& s = layout.slot(k);
    if ((s.kind == SlotKind::Network || s.kind == SlotKind::Weight) &&
        std::abs(flat(static_cast<Eigen::Index>(k))) > zero_tol) {
      A(static_cast<Eigen::Index>(s.node), static_cast<Eigen::Index>(s.other)) = 1.0;
    }
  }
  return A;
}

std::size_t active_count(const BlockLsa& problem, const Eigen::VectorXd& theta) {
  std::size_t c = 0;
  for (std::size_t b = 0; b < problem.blocks.size(); ++b)
    for (std::size_t k = 0; k < problem.indices[b].size(); ++k)
      if (problem.blocks[b].penalized[k] && theta(static_cast<Eigen::Index>(problem.indices[b][k])) != 0.0) ++c;
  return c;
}

}  // namespace

LassoPath lambda_path(const BlockLsa& problem, const ParamLayout& layout, const GridSpec& grid,
                      const PathOptions& options) {
  if (layout.pi_total() != problem.dimension) throw Error(ErrorCode::LayoutMismatch, "layout and LSA sizes differ");
  LassoPath path;
  path.lambda_max = lambda_max(problem);
  if (!(path.lambda_max > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "lambda_max is zero: the pilot carries no penalized signal");
  }
  path.lambdas = lambda_grid(path.lambda_max, grid);
  const std::size_t m = path.lambdas.size();
  std::vector<LsaResult> solved(m);
  if (options.parallel_cold) {
    parallel_for(m, options.parallelism,
                 [&](std::size_t k) { solved[k] = lsa_solve(problem, path.lambdas[k], options.lsa); });
  } else {
    for (std::size_t k = 0; k < m; ++k)
      solved[k] = lsa_solve(problem, path.lambdas[k], options.lsa, k ? &solved[k - 1].theta : nullptr);
  }
  for (std::size_t k = 0; k < m; ++k) {
    path.coefficients.push_back(ParamVector::unflatten(layout, solved[k].theta));
    path.active_counts.push_back(active_count(problem, solved[k].theta));
    path.adjacency.push_back(adjacency_from_flat(layout, solved[k].theta, 0.0));
    path.kkt_residuals.push_back(solved[k].kkt_residual);
    if (k > 0 && path.active_counts[k] < path.active_counts[k - 1]) path.monotonicity_violations.push_back(k);
  }
  return path;
}

std::string to_string(const SelectionRule& rule) {
  switch (rule.kind) {
    case SelectionRule::Kind::Min: return "min";
    case SelectionRule::Kind::HalfSe: return "half_se";
    case SelectionRule::Kind::FixedFraction: return "fixed_fraction(" + std::to_string(rule.fraction) + ")";
  }
  return "?";
}

double select_lambda(const LassoPath& path, const SelectionRule& rule) {
  if (rule.kind == SelectionRule::Kind::FixedFraction) {
    if (!(rule.fraction > 0.0)) throw Error(ErrorCode::InvalidArgument, "fraction must be positive");
    return rule.fraction * path.lambda_max;
  }
  if (!path.validation_loss || path.validation_loss->size() != path.lambdas.size()) {
    throw Error(ErrorCode::MissingValidationLoss, "rule " + to_string(rule) + " needs validation losses");
  }
  const auto& loss = *path.validation_loss;
  std::size_t best = 0;
  for (std::size_t k = 1; k < loss.size(); ++k)
    if (loss[k] < loss[best]) best = k;
  if (rule.kind == SelectionRule::Kind::Min) return path.lambdas[best];
  if (!path.validation_se || path.validation_se->size() != loss.size()) {
    throw Error(ErrorCode::MissingValidationLoss, "half_se rule needs standard errors");
  }
  const double threshold = loss[best] + 0.5 * (*path.validation_se)[best];
  for (std::size_t k = 0; k < loss.size(); ++k)
    if (loss[k] <= threshold) return path.lambdas[k];
  return path.lambdas[best];
}

// ---------------------------------------------------------------------------

std::vector<IncrementSet> validation_blocks(std::size_t n, const ValidationScheme& scheme) {
  std::vector<IncrementSet> blocks;
  if (scheme.kind == ValidationScheme::Kind::BlockedKFold) {
    const std::size_t k = scheme.folds;
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k-fold needs k >= 1");
    if (n < k) throw Error(ErrorCode::InsufficientData, "fewer increments than folds");
    for (std::size_t f = 0; f < k; ++f) blocks.push_back(IncrementSet::range(f * n / k, (f + 1) * n / k));
  } else {
    const double frac = scheme.holdout_fraction;
    if (!(frac > 0.0 && frac < 1.0)) throw Error(ErrorCode::InvalidArgument, "holdout fraction must lie in (0, 1)");
    const auto held = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n)));
    if (held < 10 || held >= n) throw Error(ErrorCode::InsufficientData, "holdout tail too short for 10 sub-blocks");
    const std::size_t start = n - held;
    for (std::size_t b = 0; b < 10; ++b) blocks.push_back(IncrementSet::range(start + b * held / 10, start + (b + 1) * held / 10));
  }
  return blocks;
}

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  const double m = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (const double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (m - 1.0)) / std::sqrt(m);
  return out;
}

// With `paired`, the standard error is taken over block losses centered at each block's
// first entry (lambda_max on a path), so the noise level shared by all lambdas within
// a block does not inflate it. The reported mean is unaffected.
ValidationLoss summarize(const std::vector<std::vector<double>>& per_block, bool paired = false) {
  ValidationLoss out;
  const std::size_t lambdas = per_block.front().size();
  for (std::size_t l = 0; l < lambdas; ++l) {
    std::vector<double> col, centered;
    for (const auto& row : per_block) {
      col.push_back(row[l]);
      centered.push_back(row[l] - row[0]);
    }
    out.loss.push_back(mean_se(col).mean);
    out.se.push_back(mean_se(paired ? centered : col).se);
  }
  return out;
}

}  // namespace

ValidationLoss validation_loss(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g,
                               const std::vector<ParamVector>& thetas, const ValidationScheme& scheme) {
  if (thetas.empty()) throw Error(ErrorCode::InvalidArgument, "no parameter vectors to validate");
  const bool aug = thetas.front().augmented();
  const DirectedGraph lg = aug ? DirectedGraph::complete(g.d()) : g;
  const ParamLayout layout(spec, lg, aug);
  const DriftDesign design(spec, lg, layout);
  std::vector<Eigen::VectorXd> flats;
  for (const auto& t : thetas) {
    check_layout(layout, t);
    flats.push_back(t.flatten());
  }
  const auto blocks = validation_blocks(path.n(), scheme);
  std::vector<std::vector<double>> per_block;
  std::vector<std::string> warnings;
  for (const auto& b : blocks) {
    if (b.count() < 10 * layout.pi_total()) {
      warnings.push_back("validation block of " + std::to_string(b.count()) + " increments is below 10 pi = " +
                         std::to_string(10 * layout.pi_total()));
    }
    const ContrastStats stats(path, spec, layout, design, b);
    std::vector<double> row;
    for (const auto& f : flats) row.push_back(stats.value(f) / static_cast<double>(stats.count()));
    per_block.push_back(std::move(row));
  }
  ValidationLoss out = summarize(per_block);
  out.warnings = std::move(warnings);
  return out;
}

Eigen::MatrixXd estimate_adjacency(const Eigen::VectorXd& w_hat, std::size_t d, double zero_tol) {
  if (zero_tol < 0.0) throw Error(ErrorCode::InvalidArgument, "zero_tol must be non-negative");
  if (static_cast<std::size_t>(w_hat.size()) != d * (d - 1)) {
    throw Error(ErrorCode::DimensionMismatch, "w has " + std::to_string(w_hat.size()) + " entries, expected d(d-1)");
  }
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j && std::abs(w_hat(static_cast<Eigen::Index>(i * (d - 1) + (j < i ? j : j - 1)))) > zero_tol)
        A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
  return A;
}

FitResult two_step_refit(const SamplePath& path, const NsdeSpec& spec, const Eigen::MatrixXd& A_hat,
                         const FitOptions& options) {
  if (A_hat.rows() != A_hat.cols()) throw Error(ErrorCode::NonSquare, "adjacency matrix");
  for (Eigen::Index i = 0; i < A_hat.rows(); ++i)
    if (A_hat(i, i) != 0.0) throw Error(ErrorCode::SelfLoop, "adjacency diagonal at " + std::to_string(i));
  const DirectedGraph g = DirectedGraph::from_adjacency(A_hat);
  const ParamLayout layout(spec, g, false);
  const DriftDesign design(spec, g, layout);
  const ContrastStats stats(path, spec, layout, design, IncrementSet::all(path.n()));
  const auto [lower, upper] = box_bounds(spec, layout);
  const Eigen::VectorXd init = joint_qmle_closed_form(stats).cwiseMax(lower).cwiseMin(upper);
  return fit_qmle(path, spec, g, ParamVector::unflatten(layout, init), options);
}

// ---------------------------------------------------------------------------

LsaSetup build_lsa(const ContrastStats& stats, const NsdeSpec& spec, const ParamLayout& layout,
                   const LassoOptions& options) {
  LsaSetup s;
  const auto [lower, upper] = box_bounds(spec, layout);
  const Eigen::VectorXd flat = joint_qmle_closed_form(stats).cwiseMax(lower).cwiseMin(upper);
  s.pilot = ParamVector::unflatten(layout, flat);
  s.weights = adaptive_weights(s.pilot, options.delta, options.cap, options.penalize_alpha, options.penalize_beta);

  const auto blocks = stats.hessian_blocks(flat);
  Eigen::MatrixXd numeric;
  if (options.hessian == HessianKind::Numerical) {
    numeric = numerical_hessian_from_gradient(
        [&stats](const Eigen::VectorXd& x, Eigen::VectorXd* grad) { return stats.value(x, grad); }, flat);
  }
  const Eigen::VectorXd gamma = s.weights.flat();
  const std::vector<bool> pen = s.weights.penalized();
  s.problem.dimension = layout.pi_total();
  for (const auto& b : blocks) {
    const auto m = static_cast<Eigen::Index>(b.indices.size());
    Eigen::MatrixXd H = b.matrix;
    if (options.hessian == HessianKind::Numerical) {
      for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < m; ++c)
          H(r, c) = numeric(static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(r)]),
                            static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(c)]));
    }
    bool clipped = false;
    LsaProblem p;
    p.H = project_psd(H, &clipped);
    s.psd_clipped = s.psd_clipped || clipped;
    p.pilot.resize(m);
    p.gamma.resize(m);
    p.lower.resize(m);
    p.upper.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = static_cast<Eigen::Index>(b.indices[static_cast<std::size_t>(r)]);
      p.pilot(r) = flat(i);
      p.gamma(r) = gamma(i);
      p.lower(r) = lower(i);
      p.upper(r) = upper(i);
      p.penalized.push_back(pen[static_cast<std::size_t>(i)]);
    }
    s.problem.indices.push_back(b.indices);
    s.problem.blocks.push_back(std::move(p));
  }
  return s;
}

namespace {

struct AugmentedModel {
  DirectedGraph graph;
  ParamLayout layout;
  DriftDesign design;

  explicit AugmentedModel(const NsdeSpec& spec)
      : graph(DirectedGraph::complete(spec.d)), layout(spec, graph, true), design(spec, graph, layout) {}
};

std::vector<double> solve_and_score(const LsaSetup& setup, const std::vector<double>& lambdas, double scale,
                                    const std::vector<const ContrastStats*>& held, std::size_t block_index,
                                    const LassoOptions& options) {
  std::vector<double> out;
  Eigen::VectorXd warm;
  for (std::size_t l = 0; l < lambdas.size(); ++l) {
    const LsaResult r = lsa_solve(setup.problem, lambdas[l] * scale, options.path_options.lsa, l ? &warm : nullptr);
    warm = r.theta;
    out.push_back(held[block_index]->value(r.theta) / static_cast<double>(held[block_index]->count()));
  }
  return out;
}

ValidationLoss cross_validate_stats(const std::vector<ContrastStats>& block_stats, const ContrastStats* train_fixed,
                                    std::size_t n, const NsdeSpec& spec, const ParamLayout& layout,
                                    const std::vector<double>& lambdas, const LassoOptions& options) {
  std::vector<const ContrastStats*> held;
  for (const auto& s : block_stats) held.push_back(&s);
  std::vector<std::vector<double>> per_block(block_stats.size());
  if (train_fixed) {
    // Hold-out tail: a single fit on the head, scored on each tail sub-block.
    const LsaSetup setup = build_lsa(*train_fixed, spec, layout, options);
    const double scale = static_cast<double>(train_fixed->count()) / static_cast<double>(n);
    parallel_for(block_stats.size(), options.path_options.parallelism,
                 [&](std::size_t b) { per_block[b] = solve_and_score(setup, lambdas, scale, held, b, options); });
  } else {
    ContrastStats full = block_stats.front();
    for (std::size_t b = 1; b < block_stats.size(); ++b) full += block_stats[b];
    parallel_for(block_stats.size(), options.path_options.parallelism, [&](std::size_t b) {
      ContrastStats train = full;
      if (block_stats.size() > 1) train -= block_stats[b];
      const LsaSetup setup = build_lsa(train, spec, layout, options);
      const double scale = static_cast<double>(train.count()) / static_cast<double>(n);
      per_block[b] = solve_and_score(setup, lambdas, scale, held, b, options);
    });
  }
  ValidationLoss out = summarize(per_block, true);
  for (const auto& s : block_stats) {
    if (s.count() < 10 * layout.pi_total()) {
      out.warnings.push_back("validation block of " + std::to_string(s.count()) + " increments is below 10 pi");
      break;
    }
  }
  return out;
}

std::vector<ContrastStats> block_statistics(const SamplePath& path, const NsdeSpec& spec, const AugmentedModel& m,
                                            const std::vector<IncrementSet>& blocks, Parallelism par) {
  std::vector<std::optional<ContrastStats>> tmp(blocks.size());
  parallel_for(blocks.size(), par,
               [&](std::size_t b) { tmp[b].emplace(path, spec, m.layout, m.design, blocks[b]); });
  std::vector<ContrastStats> out;
  for (auto& t : tmp) out.push_back(std::move(*t));
  return out;
}

}  // namespace

ValidationLoss cross_validate(const SamplePath& path, const NsdeSpec& spec, const std::vector<double>& lambdas,
                              const LassoOptions& options) {
  const AugmentedModel m(spec);
  const std::size_t n = path.n();
  const auto blocks = validation_blocks(n, options.validation);
  const auto stats = block_statistics(path, spec, m, blocks, options.path_options.parallelism);
  if (options.validation.kind == ValidationScheme::Kind::HoldoutTail) {
    const std::size_t start = blocks.front().ranges().front().first;
    const ContrastStats head(path, spec, m.layout, m.design, IncrementSet::range(0, start));
    return cross_validate_stats(stats, &head, n, spec, m.layout, lambdas, options);
  }
  return cross_validate_stats(stats, nullptr, n, spec, m.layout, lambdas, options);
}

LassoFit fit_adaptive_lasso(const SamplePath& path, const NsdeSpec& spec, const LassoOptions& options) {
  spec.validate();
  if (path.d() != spec.d) throw Error(ErrorCode::DimensionMismatch, "path and model dimensions differ");
  const AugmentedModel m(spec);
  const std::size_t n = path.n();
  const bool validate = options.always_validate || options.rule.kind != SelectionRule::Kind::FixedFraction;
  const bool kfold = validate && options.validation.kind == ValidationScheme::Kind::BlockedKFold;

  std::vector<IncrementSet> blocks;
  std::vector<ContrastStats> block_stats;
  std::optional<ContrastStats> full;
  if (kfold) {
    blocks = validation_blocks(n, options.validation);
    block_stats = block_statistics(path, spec, m, blocks, options.path_options.parallelism);
    full.emplace(block_stats.front());
    for (std::size_t b = 1; b < block_stats.size(); ++b) *full += block_stats[b];
  } else {
    full.emplace(path, spec, m.layout, m.design, IncrementSet::all(n));
  }

  LassoFit fit;
  LsaSetup setup = build_lsa(*full, spec, m.layout, options);
  if (setup.psd_clipped) fit.warnings.push_back("Hessian at the pilot was indefinite; eigenvalues clipped");
  fit.pilot = setup.pilot;
  fit.weights = setup.weights;
  fit.path = lambda_path(setup.problem, m.layout, options.grid, options.path_options);
  if (!fit.path.monotonicity_violations.empty()) {
    fit.warnings.push_back("active set shrank at " + std::to_string(fit.path.monotonicity_violations.size()) +
                           " grid points as lambda decreased");
  }

  if (validate) {
    ValidationLoss v;
    if (kfold) {
      v = cross_validate_stats(block_stats, nullptr, n, spec, m.layout, fit.path.lambdas, options);
    } else {
      v = cross_validate(path, spec, fit.path.lambdas, options);
    }
    fit.path.validation_loss = std::move(v.loss);
    fit.path.validation_se = std::move(v.se);
    fit.warnings.insert(fit.warnings.end(), v.warnings.begin(), v.warnings.end());
  }

  fit.lambda_selected = select_lambda(fit.path, options.rule);
  const auto it = std::find(fit.path.lambdas.begin(), fit.path.lambdas.end(), fit.lambda_selected);
  if (it != fit.path.lambdas.end()) {
    fit.theta_selected = fit.path.coefficients[static_cast<std::size_t>(it - fit.path.lambdas.begin())];
  } else {
    // Off-grid lambda: warm-start from the nearest larger grid point.
    std::size_t k = 0;
    while (k + 1 < fit.path.lambdas.size() && fit.path.lambdas[k + 1] >= fit.lambda_selected) ++k;
    const Eigen::VectorXd warm = fit.path.coefficients[k].flatten();
    const LsaResult r = lsa_solve(setup.problem, fit.lambda_selected, options.path_options.lsa, &warm);
    fit.theta_selected = ParamVector::unflatten(m.layout, r.theta);
  }
  fit.adjacency = estimate_adjacency(*fit.theta_selected.w, spec.d, options.zero_tol);
  if (options.refit) fit.refit = two_step_refit(path, spec, fit.adjacency, options.refit_options);
  return fit;
}

}  // namespace nsde
