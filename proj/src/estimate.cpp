#include "nsde/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nsde/error.hpp"
#include "nsde/optimize.hpp"
#include "nsde/rng.hpp"

namespace nsde {

IncrementSet IncrementSet::range(std::size_t begin, std::size_t end) {
  if (begin > end) throw Error(ErrorCode::InvalidArgument, "increment range with begin > end");
  IncrementSet s;
  if (begin < end) s.ranges_.emplace_back(begin, end);
  return s;
}

IncrementSet IncrementSet::all_but(std::size_t n, std::size_t begin, std::size_t end) {
  if (begin > end || end > n) throw Error(ErrorCode::InvalidArgument, "held-out range outside [0, n)");
  IncrementSet s;
  if (begin > 0) s.ranges_.emplace_back(0, begin);
  if (end < n) s.ranges_.emplace_back(end, n);
  return s;
}

std::size_t IncrementSet::count() const noexcept {
  std::size_t c = 0;
  for (const auto& [b, e] : ranges_) c += e - b;
  return c;
}

namespace {

void check_increments(const IncrementSet& inc, std::size_t n) {
  for (const auto& [b, e] : inc.ranges()) {
    if (e > n) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "increment " + std::to_string(e - 1) + " but path has " + std::to_string(n));
    }
  }
}

DirectedGraph layout_graph(const DirectedGraph& g, bool augmented) {
  return augmented ? DirectedGraph::complete(g.d()) : g;
}

std::span<const double> row_span(const Eigen::Matrix<double, 1, Eigen::Dynamic>& row) {
  return {row.data(), static_cast<std::size_t>(row.size())};
}

}  // namespace

double quasi_loglik(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta) {
  return quasi_loglik(path, spec, g, theta, IncrementSet::all(path.n()));
}

double quasi_loglik(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                    const IncrementSet& increments) {
  const bool aug = theta.augmented();
  const ParamLayout layout(spec, layout_graph(g, aug), aug);
  check_layout(layout, theta);
  if (path.d() != spec.d) throw Error(ErrorCode::DimensionMismatch, "path and model dimensions differ");
  check_increments(increments, path.n());
  const DriftDesign design(spec, layout_graph(g, aug), layout);
  const Eigen::VectorXd flat = theta.flatten();
  const double delta = path.delta;
  const std::size_t d = spec.d;

  std::vector<double> drift(d), scratch;
  Eigen::Matrix<double, 1, Eigen::Dynamic> x(d);
  double total = 0.0;
  increments.for_each([&](std::size_t k) {
    x = path.data.row(static_cast<Eigen::Index>(k));
    design.drift(row_span(x), flat, drift, scratch);
    for (std::size_t j = 0; j < d; ++j) {
      const double sigma = theta.alpha(static_cast<Eigen::Index>(j)) * diffusion_shape(spec.diffusion, x(j));
      if (!(sigma > 0.0)) {
        throw Error(ErrorCode::DegenerateDiffusion, "sigma_" + std::to_string(j) + " is not positive");
      }
      const double dx = path.data(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(j)) - x(j);
      const double r = dx - delta * drift[j];
      total += r * r / (2.0 * delta * sigma * sigma) + std::log(sigma);
    }
  });
  return total;
}

// ---------------------------------------------------------------------------

ContrastStats::ContrastStats(const SamplePath& path, const NsdeSpec& spec, const ParamLayout& layout,
                             const DriftDesign& design, const IncrementSet& increments)
    : nodes_(layout.d()), count_(increments.count()), dim_(layout.pi_total()), delta_(path.delta) {
  if (path.d() != layout.d()) throw Error(ErrorCode::DimensionMismatch, "path and model dimensions differ");
  if (!(delta_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  check_increments(increments, path.n());
  if (count_ == 0) throw Error(ErrorCode::InsufficientData, "no increments selected");
  const std::size_t d = layout.d();
  for (std::size_t i = 0; i < d; ++i) {
    Node& node = nodes_[i];
    node.alpha_slot = layout.alpha_slot(i);
    for (const auto& t : design.terms(i)) node.slots.push_back(t.slot);
    const auto m = static_cast<Eigen::Index>(node.slots.size());
    node.gram = Eigen::MatrixXd::Zero(m, m);
    node.cross = Eigen::VectorXd::Zero(m);
  }

  std::vector<double> factors;
  Eigen::VectorXd phi(static_cast<Eigen::Index>(design.max_terms()));
  Eigen::Matrix<double, 1, Eigen::Dynamic> x(d);
  increments.for_each([&](std::size_t k) {
    x = path.data.row(static_cast<Eigen::Index>(k));
    design.basis_factors(row_span(x), factors);
    for (std::size_t i = 0; i < d; ++i) {
      Node& node = nodes_[i];
      const auto m = static_cast<Eigen::Index>(node.slots.size());
      design.features(row_span(x), i, factors, {phi.data(), node.slots.size()});
      const double g = diffusion_shape(spec.diffusion, x(i));
      const double w = 1.0 / (g * g);
      const double dx = path.data(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(i)) - x(i);
      auto p = phi.head(m);
      node.gram.selfadjointView<Eigen::Lower>().rankUpdate(p, w);
      node.cross.noalias() += (w * dx) * p;
      node.square_sum += w * dx * dx;
      node.log_shape_sum += std::log(g);
    }
  });
  for (Node& node : nodes_) node.gram = node.gram.selfadjointView<Eigen::Lower>();
}

namespace {

struct NodeTerms {
  Eigen::VectorXd beta;
  Eigen::VectorXd gbeta;  // G beta
  double q = 0.0;         // S - 2 delta beta'h + delta^2 beta'G beta
};

NodeTerms node_terms(const ContrastStats::Node& node, const Eigen::VectorXd& flat, double delta) {
  NodeTerms t;
  t.beta.resize(static_cast<Eigen::Index>(node.slots.size()));
  for (std::size_t k = 0; k < node.slots.size(); ++k)
    t.beta(static_cast<Eigen::Index>(k)) = flat(static_cast<Eigen::Index>(node.slots[k]));
  t.gbeta = node.gram * t.beta;
  t.q = node.square_sum - 2.0 * delta * t.beta.dot(node.cross) + delta * delta * t.beta.dot(t.gbeta);
  // Q is a sum of squares; cancellation can leave a tiny negative residue.
  t.q = std::max(t.q, 0.0);
  return t;
}

}  // namespace

double ContrastStats::value(const Eigen::VectorXd& flat, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(flat.size()) != dim_) throw Error(ErrorCode::LayoutMismatch, "flat vector size");
  if (grad) grad->setZero(flat.size());
  const double n = static_cast<double>(count_);
  double total = 0.0;
  for (const Node& node : nodes_) {
    const double a = flat(static_cast<Eigen::Index>(node.alpha_slot));
    if (!(a > 0.0)) return std::numeric_limits<double>::infinity();
    const NodeTerms t = node_terms(node, flat, delta_);
    const double a2 = a * a;
    total += t.q / (2.0 * delta_ * a2) + n * std::log(a) + node.log_shape_sum;
    if (grad) {
      const Eigen::VectorXd g = (delta_ * t.gbeta - node.cross) / a2;
      for (std::size_t k = 0; k < node.slots.size(); ++k)
        (*grad)(static_cast<Eigen::Index>(node.slots[k])) += g(static_cast<Eigen::Index>(k));
      (*grad)(static_cast<Eigen::Index>(node.alpha_slot)) += -t.q / (delta_ * a2 * a) + n / a;
    }
  }
  return total;
}

std::vector<ContrastStats::Block> ContrastStats::hessian_blocks(const Eigen::VectorXd& flat) const {
  if (static_cast<std::size_t>(flat.size()) != dim_) throw Error(ErrorCode::LayoutMismatch, "flat vector size");
  const double n = static_cast<double>(count_);
  std::vector<Block> blocks;
  blocks.reserve(nodes_.size());
  for (const Node& node : nodes_) {
    const double a = flat(static_cast<Eigen::Index>(node.alpha_slot));
    if (!(a > 0.0)) throw Error(ErrorCode::DegenerateDiffusion, "Hessian requested at alpha <= 0");
    const NodeTerms t = node_terms(node, flat, delta_);
    const auto m = static_cast<Eigen::Index>(node.slots.size());
    Block b;
    b.indices.push_back(node.alpha_slot);
    b.indices.insert(b.indices.end(), node.slots.begin(), node.slots.end());
    b.matrix.resize(m + 1, m + 1);
    const double a2 = a * a;
    b.matrix(0, 0) = 3.0 * t.q / (delta_ * a2 * a2) - n / a2;
    const Eigen::VectorXd cross = -2.0 * (delta_ * t.gbeta - node.cross) / (a2 * a);
    b.matrix.block(1, 0, m, 1) = cross;
    b.matrix.block(0, 1, 1, m) = cross.transpose();
    b.matrix.block(1, 1, m, m) = (delta_ / a2) * node.gram;
    blocks.push_back(std::move(b));
  }
  return blocks;
}

Eigen::MatrixXd ContrastStats::hessian(const Eigen::VectorXd& flat) const {
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(flat.size(), flat.size());
  for (const Block& b : hessian_blocks(flat)) {
    for (std::size_t r = 0; r < b.indices.size(); ++r)
      for (std::size_t c = 0; c < b.indices.size(); ++c)
        H(static_cast<Eigen::Index>(b.indices[r]), static_cast<Eigen::Index>(b.indices[c])) +=
            b.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return H;
}

double ContrastStats::u_contrast(const Eigen::VectorXd& flat, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(flat.size()) != dim_) throw Error(ErrorCode::LayoutMismatch, "flat vector size");
  if (grad) grad->setZero(flat.size());
  const double n = static_cast<double>(count_);
  double total = 0.0;
  for (const Node& node : nodes_) {
    const double a = flat(static_cast<Eigen::Index>(node.alpha_slot));
    if (!(a > 0.0)) return std::numeric_limits<double>::infinity();
    const double a2 = a * a;
    total += node.square_sum / (delta_ * a2) + n * std::log(a2) + 2.0 * node.log_shape_sum;
    if (grad) {
      (*grad)(static_cast<Eigen::Index>(node.alpha_slot)) = -2.0 * node.square_sum / (delta_ * a2 * a) + 2.0 * n / a;
    }
  }
  return total;
}

double ContrastStats::v_contrast(const Eigen::VectorXd& flat, Eigen::VectorXd* grad) const {
  if (static_cast<std::size_t>(flat.size()) != dim_) throw Error(ErrorCode::LayoutMismatch, "flat vector size");
  if (grad) grad->setZero(flat.size());
  double total = 0.0;
  for (const Node& node : nodes_) {
    const double a = flat(static_cast<Eigen::Index>(node.alpha_slot));
    if (!(a > 0.0)) return std::numeric_limits<double>::infinity();
    const NodeTerms t = node_terms(node, flat, delta_);
    const double a2 = a * a;
    total += t.q / (2.0 * delta_ * a2);
    if (grad) {
      const Eigen::VectorXd g = (delta_ * t.gbeta - node.cross) / a2;
      for (std::size_t k = 0; k < node.slots.size(); ++k)
        (*grad)(static_cast<Eigen::Index>(node.slots[k])) += g(static_cast<Eigen::Index>(k));
    }
  }
  return total;
}

namespace {

void check_compatible(const ContrastStats& a, const ContrastStats& b) {
  bool ok = a.dimension() == b.dimension() && a.nodes().size() == b.nodes().size() && a.delta() == b.delta();
  for (std::size_t i = 0; ok && i < a.nodes().size(); ++i) ok = a.nodes()[i].slots == b.nodes()[i].slots;
  if (!ok) throw Error(ErrorCode::LayoutMismatch, "contrast statistics built for different models");
}

}  // namespace

ContrastStats& ContrastStats::operator+=(const ContrastStats& other) {
  check_compatible(*this, other);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].gram += other.nodes_[i].gram;
    nodes_[i].cross += other.nodes_[i].cross;
    nodes_[i].square_sum += other.nodes_[i].square_sum;
    nodes_[i].log_shape_sum += other.nodes_[i].log_shape_sum;
  }
  count_ += other.count_;
  return *this;
}

ContrastStats& ContrastStats::operator-=(const ContrastStats& other) {
  check_compatible(*this, other);
  if (other.count_ >= count_) throw Error(ErrorCode::InsufficientData, "subtraction leaves no increments");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    nodes_[i].gram -= other.nodes_[i].gram;
    nodes_[i].cross -= other.nodes_[i].cross;
    nodes_[i].square_sum -= other.nodes_[i].square_sum;
    nodes_[i].log_shape_sum -= other.nodes_[i].log_shape_sum;
  }
  count_ -= other.count_;
  return *this;
}

Eigen::VectorXd joint_qmle_closed_form(const ContrastStats& stats, double rcond) {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(stats.dimension()));
  const double delta = stats.delta();
  for (std::size_t i = 0; i < stats.nodes().size(); ++i) {
    const auto& node = stats.nodes()[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(node.gram, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmin > rcond * lmax)) {
      throw Error(ErrorCode::SingularGram, "Gram matrix of node " + std::to_string(i) + " is singular");
    }
    const Eigen::VectorXd beta = node.gram.ldlt().solve(node.cross) / delta;
    for (std::size_t k = 0; k < node.slots.size(); ++k)
      flat(static_cast<Eigen::Index>(node.slots[k])) = beta(static_cast<Eigen::Index>(k));
    const double q = std::max(node.square_sum - delta * beta.dot(node.cross), 0.0);
    flat(static_cast<Eigen::Index>(node.alpha_slot)) = std::sqrt(q / (static_cast<double>(stats.count()) * delta));
  }
  return flat;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd rate_matrix(std::size_t pi_alpha, std::size_t pi_total, std::size_t n, double delta) {
  if (n == 0 || !(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "rate matrix needs n > 0, delta > 0");
  Eigen::VectorXd r(static_cast<Eigen::Index>(pi_total));
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < pi_total; ++k)
    r(static_cast<Eigen::Index>(k)) = k < pi_alpha ? 1.0 / std::sqrt(nd) : 1.0 / std::sqrt(nd * delta);
  return r;
}

Eigen::MatrixXd scaled_information(const FitResult& fit, std::size_t n, double delta) {
  const Eigen::VectorXd r = rate_matrix(fit.pi_alpha, static_cast<std::size_t>(fit.info_matrix.rows()), n, delta);
  return r.asDiagonal() * fit.info_matrix * r.asDiagonal();
}

Eigen::VectorXd FitResult::standard_errors() const {
  const Eigen::Index m = info_matrix.rows();
  Eigen::VectorXd se = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
  if (m == 0) return se;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info_matrix);
  if (eig.info() != Eigen::Success) return se;
  const Eigen::VectorXd ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(1.0, ev.maxCoeff()))) return se;
  const Eigen::MatrixXd inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return inv.diagonal().cwiseSqrt();
}

namespace {

// Optimizes over the coordinates in `free`, all others held at `base`.
OptimizeResult minimize_subset(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& f,
                               const Eigen::VectorXd& base, const std::vector<std::size_t>& free,
                               const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper, const OptimizeOptions& opts) {
  const auto m = static_cast<Eigen::Index>(free.size());
  Eigen::VectorXd lo(m), hi(m), x0(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto s = static_cast<Eigen::Index>(free[static_cast<std::size_t>(k)]);
    lo(k) = lower(s);
    hi(k) = upper(s);
    x0(k) = start(s);
  }
  Objective sub = [&](const Eigen::VectorXd& y, Eigen::VectorXd* grad) {
    Eigen::VectorXd full = base;
    for (Eigen::Index k = 0; k < m; ++k) full(static_cast<Eigen::Index>(free[static_cast<std::size_t>(k)])) = y(k);
    Eigen::VectorXd g_full;
    const double v = f(full, grad ? &g_full : nullptr);
    if (grad) {
      grad->resize(m);
      for (Eigen::Index k = 0; k < m; ++k)
        (*grad)(k) = g_full(static_cast<Eigen::Index>(free[static_cast<std::size_t>(k)]));
    }
    return v;
  };
  OptimizeResult res = minimize_box(sub, x0, lo, hi, opts);
  Eigen::VectorXd full = base;
  for (Eigen::Index k = 0; k < m; ++k) full(static_cast<Eigen::Index>(free[static_cast<std::size_t>(k)])) = res.x(k);
  res.x = std::move(full);
  return res;
}

Eigen::VectorXd jittered_start(const Eigen::VectorXd& x, const std::vector<std::size_t>& free, std::size_t pi_alpha,
                               std::uint64_t seed, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd out = x;
  for (const std::size_t k : free) {
    const auto s = static_cast<Eigen::Index>(k);
    const double z = counter_normal(seed, k, 3u);
    if (k < pi_alpha) {
      out(s) = x(s) * std::exp(0.25 * z);
    } else {
      out(s) = x(s) + 0.25 * (1.0 + std::abs(x(s))) * z;
    }
    out(s) = std::clamp(out(s), lower(s), upper(s));
  }
  return out;
}

}  // namespace

FitResult fit_qmle(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& init,
                   const FitOptions& options) {
  spec.validate();
  const bool aug = init.augmented();
  const DirectedGraph lg = layout_graph(g, aug);
  const ParamLayout layout(spec, lg, aug);
  check_layout(layout, init);
  const DriftDesign design(spec, lg, layout);
  const IncrementSet inc = options.increments.value_or(IncrementSet::all(path.n()));
  const ContrastStats stats(path, spec, layout, design, inc);

  const auto [lower, upper] = box_bounds(spec, layout);
  Eigen::VectorXd x0 = init.flatten();
  for (Eigen::Index k = 0; k < x0.size(); ++k) {
    if (x0(k) < lower(k) || x0(k) > upper(k)) {
      throw Error(ErrorCode::BoundsViolation, "initial " + layout.name(static_cast<std::size_t>(k)) + " = " +
                                                  std::to_string(x0(k)) + " outside the parameter box");
    }
  }
  const std::size_t pa = layout.pi_alpha();
  if (options.frozen_alpha) {
    if (static_cast<std::size_t>(options.frozen_alpha->size()) != pa) {
      throw Error(ErrorCode::LayoutMismatch, "frozen alpha has the wrong length");
    }
    x0.head(static_cast<Eigen::Index>(pa)) = *options.frozen_alpha;
  }

  std::vector<std::size_t> free;
  const bool alpha_free = !options.frozen_alpha && options.mode == FitMode::Joint;
  for (std::size_t k = alpha_free ? 0 : pa; k < layout.pi_total(); ++k) free.push_back(k);

  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> objective;
  if (options.mode == FitMode::Adaptive) {
    if (!options.frozen_alpha) {
      // Stage one has a closed-form minimizer: alpha_i^2 = S_i / (n delta).
      for (const auto& node : stats.nodes()) {
        const auto s = static_cast<Eigen::Index>(node.alpha_slot);
        const double a = std::sqrt(node.square_sum / (static_cast<double>(stats.count()) * stats.delta()));
        x0(s) = std::clamp(a, lower(s), upper(s));
      }
    }
    objective = [&stats](const Eigen::VectorXd& x, Eigen::VectorXd* grad) { return stats.v_contrast(x, grad); };
  } else {
    objective = [&stats](const Eigen::VectorXd& x, Eigen::VectorXd* grad) { return stats.value(x, grad); };
  }

  OptimizeOptions opts;
  opts.max_iterations = options.max_iterations;
  opts.gradient_tolerance = options.gradient_tolerance;

  const std::size_t starts = std::max<std::size_t>(options.restarts, 1);
  std::vector<OptimizeResult> runs(starts);
  parallel_for(starts, options.parallelism, [&](std::size_t r) {
    const Eigen::VectorXd start =
        r == 0 ? x0 : jittered_start(x0, free, pa, mix_seed(options.seed, r), lower, upper);
    runs[r] = minimize_subset(objective, start, free, start, lower, upper, opts);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < starts; ++r)
    if (runs[r].value < runs[best].value) best = r;
  const OptimizeResult& run = runs[best];

  FitResult fit;
  fit.theta_hat = ParamVector::unflatten(layout, run.x);
  fit.pi_alpha = pa;
  for (std::size_t k = 0; k < layout.pi_total(); ++k) fit.names.push_back(layout.name(k));
  fit.contrast_value = stats.value(run.x);
  fit.converged = run.converged;
  fit.iterations = run.iterations;
  fit.trace = run.trace;
  fit.n = stats.count();
  fit.delta = stats.delta();

  if (std::isfinite(fit.contrast_value)) {
    if (options.hessian == HessianKind::Analytic) {
      fit.info_matrix = stats.hessian(run.x);
    } else {
      fit.info_matrix = numerical_hessian_from_gradient(
          [&stats](const Eigen::VectorXd& x, Eigen::VectorXd* grad) { return stats.value(x, grad); }, run.x);
    }
    fit.rate_diagonal = rate_matrix(pa, layout.pi_total(), fit.n, fit.delta);
    fit.scaled_info = fit.rate_diagonal.asDiagonal() * fit.info_matrix * fit.rate_diagonal.asDiagonal();
  } else {
    fit.warnings.push_back("contrast is not finite at the estimate (some alpha is zero)");
  }

  if (!fit.converged) {
    std::ostringstream msg;
    msg << "optimizer stopped after " << run.iterations << " iterations with projected gradient "
        << run.projected_gradient_norm;
    fit.warnings.push_back(msg.str());
  }
  const double eps = layout.epsilon_ratio(fit.n, fit.delta);
  if (eps > 1.0) {
    std::ostringstream msg;
    msg << "|G_d| / (n delta) = " << eps << "; the sample horizon is short for this graph";
    fit.warnings.push_back(msg.str());
  }
  return fit;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd stage_one_alpha(const SamplePath& path, const NsdeSpec& spec,
                                const std::optional<IncrementSet>& increments) {
  if (path.d() != spec.d) throw Error(ErrorCode::DimensionMismatch, "path and model dimensions differ");
  const IncrementSet inc = increments.value_or(IncrementSet::all(path.n()));
  check_increments(inc, path.n());
  const std::size_t count = inc.count();
  if (count == 0) throw Error(ErrorCode::InsufficientData, "no increments selected");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.d));
  inc.for_each([&](std::size_t k) {
    const auto r = static_cast<Eigen::Index>(k);
    for (Eigen::Index j = 0; j < acc.size(); ++j) {
      const double gx = diffusion_shape(spec.diffusion, path.data(r, j));
      const double dx = path.data(r + 1, j) - path.data(r, j);
      acc(j) += dx * dx / (gx * gx);
    }
  });
  return (acc / (static_cast<double>(count) * path.delta)).cwiseSqrt();
}

Eigen::MatrixXd sigma_hat_matrix(const SamplePath& path, const NsdeSpec& spec, const Eigen::VectorXd& alpha) {
  if (static_cast<std::size_t>(alpha.size()) != path.d()) {
    throw Error(ErrorCode::DimensionMismatch, "alpha and path dimensions differ");
  }
  const auto n = static_cast<Eigen::Index>(path.n());
  Eigen::MatrixXd s(n, alpha.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < alpha.size(); ++j) {
      if (alpha(j) < 0.0) throw Error(ErrorCode::NegativeAlpha, "alpha_" + std::to_string(j) + " < 0");
      s(i, j) = alpha(j) * diffusion_shape(spec.diffusion, path.data(i, j));
    }
  return s;
}

ClosedFormFit fit_linear_closed_form(const SamplePath& path, const DirectedGraph& g, const Eigen::MatrixXd& sigma_hat,
                                     bool intercepts, const ClosedFormOptions& options) {
  const std::size_t d = g.d();
  if (path.d() != d) throw Error(ErrorCode::DimensionMismatch, "path and graph dimensions differ");
  if (static_cast<std::size_t>(sigma_hat.rows()) != path.n() || static_cast<std::size_t>(sigma_hat.cols()) != d) {
    throw Error(ErrorCode::DimensionMismatch, "sigma_hat must be n x d");
  }
  const IncrementSet inc = options.increments.value_or(IncrementSet::all(path.n()));
  check_increments(inc, path.n());
  const std::size_t count = inc.count();
  if (count == 0) throw Error(ErrorCode::InsufficientData, "no increments selected");

  NsdeSpec lin;
  lin.d = d;
  lin.drift = LinearDrift{intercepts};
  const ParamLayout layout(lin, g, false);
  const auto pa = static_cast<Eigen::Index>(layout.pi_alpha());

  ClosedFormFit out;
  out.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.pi_beta()));
  for (std::size_t j = 0; j < d; ++j) {
    const auto& parents = g.parents(j);
    std::vector<Eigen::Index> cols{static_cast<Eigen::Index>(j)};
    for (const auto p : parents) cols.push_back(static_cast<Eigen::Index>(p));
    const auto m = static_cast<Eigen::Index>(cols.size() + (intercepts ? 1 : 0));
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd z(m);
    const auto jj = static_cast<Eigen::Index>(j);
    inc.for_each([&](std::size_t k) {
      const auto row = static_cast<Eigen::Index>(k);
      for (std::size_t c = 0; c < cols.size(); ++c) z(static_cast<Eigen::Index>(c)) = path.data(row, cols[c]);
      if (intercepts) z(m - 1) = 1.0;
      const double s = sigma_hat(row, jj);
      if (!(s > 0.0)) throw Error(ErrorCode::DegenerateDiffusion, "sigma_hat is not positive");
      const double w = 1.0 / (s * s);
      M.selfadjointView<Eigen::Lower>().rankUpdate(z, w);
      r.noalias() += (w * (path.data(row + 1, jj) - path.data(row, jj))) * z;
    });
    M = M.selfadjointView<Eigen::Lower>();
    M /= static_cast<double>(count);
    r /= static_cast<double>(count);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    out.condition_numbers.push_back(lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity());
    Eigen::MatrixXd A = M;
    if (!(lmin > options.singular_rcond * lmax)) {
      if (!options.allow_jitter) {
        throw Error(ErrorCode::SingularGram, "normal matrix of node " + std::to_string(j) +
                                                 " is singular (condition " +
                                                 std::to_string(out.condition_numbers.back()) + ")");
      }
      A.diagonal().array() += 1e-10 * M.trace() / static_cast<double>(m);
      out.jittered_nodes.push_back(j);
    }
    const Eigen::VectorXd coef = A.ldlt().solve(r) / path.delta;

    out.beta(static_cast<Eigen::Index>(layout.momentum_slot(j)) - pa) = -coef(0);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto e = static_cast<std::size_t>(g.edge_index(j, parents[p]));
      out.beta(static_cast<Eigen::Index>(layout.network_slot(e)) - pa) = coef(static_cast<Eigen::Index>(p + 1));
    }
    if (intercepts) out.beta(static_cast<Eigen::Index>(*layout.intercept_slot(j)) - pa) = coef(m - 1);
    out.normal_matrices.push_back(std::move(M));
    out.normal_rhs.push_back(std::move(r));
  }
  return out;
}

ParamVector linear_pilot(const SamplePath& path, const NsdeSpec& spec, const DirectedGraph& g, bool augmented,
                         const std::optional<IncrementSet>& increments) {
  const auto* lin = std::get_if<LinearDrift>(&spec.drift);
  if (!lin) throw Error(ErrorCode::InvalidArgument, "closed-form pilot needs a linear drift");
  const Eigen::VectorXd alpha = stage_one_alpha(path, spec, increments);
  const DirectedGraph lg = layout_graph(g, augmented);
  ClosedFormOptions opts;
  opts.increments = increments;
  const ClosedFormFit cf = fit_linear_closed_form(path, lg, sigma_hat_matrix(path, spec, alpha), lin->intercepts, opts);
  ParamVector plain{alpha, cf.beta, std::nullopt};
  if (!augmented) return plain;
  return to_augmented(plain, ParamLayout(spec, lg, true), lg);
}

}  // namespace nsde
