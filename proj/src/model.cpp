#include "nsde/model.hpp"

#include <cmath>
#include <string>

#include "nsde/error.hpp"

namespace nsde {

void NsdeSpec::validate() const {
  if (d == 0) throw Error(ErrorCode::InvalidArgument, "model dimension d must be positive");
  if (const auto* radial = std::get_if<RadialDictionary>(&drift)) {
    if (radial->scales.empty() || radial->scales.size() != radial->exponents.size()) {
      throw Error(ErrorCode::InvalidArgument, "radial dictionary needs matching scales/exponents");
    }
    for (std::size_t l = 0; l < radial->size(); ++l) {
      if (!(radial->scales[l] > 0.0)) throw Error(ErrorCode::InvalidArgument, "radial scale must be > 0");
      const double q = radial->exponents[l];
      if (!(q >= -1.0 && q <= 1.0)) throw Error(ErrorCode::InvalidArgument, "radial exponent outside [-1, 1]");
      if (l > 0 && !(q > radial->exponents[l - 1])) {
        throw Error(ErrorCode::InvalidArgument, "radial exponents must be strictly increasing");
      }
    }
  }
  if (const auto* tanh = std::get_if<TanhClipped>(&diffusion); tanh && !(tanh->c > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "tanh clip height c must be > 0");
  }
  if (!(bounds.lower < bounds.upper) || !(bounds.alpha_lower < bounds.alpha_upper) || bounds.alpha_lower < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "malformed parameter bounds");
  }
}

bool NsdeSpec::has_intercepts() const noexcept {
  const auto* linear = std::get_if<LinearDrift>(&drift);
  return linear && linear->intercepts;
}

// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const NsdeSpec& spec, const DirectedGraph& g, bool augmented)
    : d_(g.d()), edge_count_(g.edge_count()), augmented_(augmented), intercepts_(spec.has_intercepts()) {
  if (spec.d != g.d()) {
    throw Error(ErrorCode::LayoutMismatch,
                "spec d=" + std::to_string(spec.d) + " but graph d=" + std::to_string(g.d()));
  }
  const auto* radial = std::get_if<RadialDictionary>(&spec.drift);
  basis_count_ = radial ? radial->size() : 1;
  if (augmented && basis_count_ != 1) {
    throw Error(ErrorCode::LayoutMismatch, "augmented layouts need a single network basis element");
  }

  pi_alpha_ = d_;
  for (std::size_t i = 0; i < d_; ++i) slots_.push_back({SlotKind::Alpha, i});
  for (std::size_t i = 0; i < d_; ++i) slots_.push_back({SlotKind::Momentum, i});
  if (!augmented) {
    for (std::size_t l = 0; l < basis_count_; ++l)
      for (const auto& e : g.edges()) slots_.push_back({SlotKind::Network, e.child, e.parent, l});
  }
  if (intercepts_)
    for (std::size_t i = 0; i < d_; ++i) slots_.push_back({SlotKind::Intercept, i});
  pi_beta_ = slots_.size() - pi_alpha_;
  if (augmented) {
    for (std::size_t i = 0; i < d_; ++i)
      for (std::size_t j = 0; j < d_; ++j)
        if (i != j) slots_.push_back({SlotKind::Weight, i, j});
    pi_w_ = d_ * (d_ - 1);
  }
}

std::optional<std::size_t> ParamLayout::intercept_slot(std::size_t node) const noexcept {
  if (!intercepts_) return std::nullopt;
  const std::size_t network = augmented_ ? 0 : basis_count_ * edge_count_;
  return pi_alpha_ + d_ + network + node;
}

std::string ParamLayout::name(std::size_t k) const {
  const Slot& s = slots_.at(k);
  const auto i = std::to_string(s.node);
  const auto j = std::to_string(s.other);
  switch (s.kind) {
    case SlotKind::Alpha: return "alpha_" + i;
    case SlotKind::Momentum: return "mu_" + i;
    case SlotKind::Intercept: return "b0_" + i;
    case SlotKind::Network:
      return basis_count_ > 1 ? "beta" + std::to_string(s.basis + 1) + "_" + i + "_" + j : "beta_" + i + "_" + j;
    case SlotKind::Weight: return "w_" + i + "_" + j;
  }
  return {};
}

ParamLayout parameter_layout(const NsdeSpec& spec, const DirectedGraph& g, bool augmented) {
  return ParamLayout(spec, g, augmented);
}

Eigen::VectorXd ParamVector::flatten() const {
  const Eigen::Index nw = w ? w->size() : 0;
  Eigen::VectorXd flat(alpha.size() + beta.size() + nw);
  flat << alpha, beta, (w ? *w : Eigen::VectorXd());
  return flat;
}

ParamVector ParamVector::unflatten(const ParamLayout& layout, const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != layout.pi_total()) {
    throw Error(ErrorCode::LayoutMismatch, "flat vector has " + std::to_string(flat.size()) +
                                               " entries, layout expects " + std::to_string(layout.pi_total()));
  }
  ParamVector p;
  const auto na = static_cast<Eigen::Index>(layout.pi_alpha());
  const auto nb = static_cast<Eigen::Index>(layout.pi_beta());
  p.alpha = flat.head(na);
  p.beta = flat.segment(na, nb);
  if (layout.augmented()) p.w = flat.tail(static_cast<Eigen::Index>(layout.pi_w()));
  return p;
}

void check_layout(const ParamLayout& layout, const ParamVector& theta) {
  const bool ok = static_cast<std::size_t>(theta.alpha.size()) == layout.pi_alpha() &&
                  static_cast<std::size_t>(theta.beta.size()) == layout.pi_beta() &&
                  theta.augmented() == layout.augmented() &&
                  (!theta.w || static_cast<std::size_t>(theta.w->size()) == layout.pi_w());
  if (!ok) {
    throw Error(ErrorCode::LayoutMismatch,
                "parameter blocks (" + std::to_string(theta.alpha.size()) + ", " + std::to_string(theta.beta.size()) +
                    ", " + std::to_string(theta.w ? theta.w->size() : 0) + ") vs layout (" +
                    std::to_string(layout.pi_alpha()) + ", " + std::to_string(layout.pi_beta()) + ", " +
                    std::to_string(layout.pi_w()) + ")");
  }
}

ParamVector uniform_params(const ParamLayout& layout, double alpha, double momentum, double network,
                           double intercept) {
  Eigen::VectorXd flat(layout.pi_total());
  for (std::size_t k = 0; k < layout.pi_total(); ++k) {
    switch (layout.slot(k).kind) {
      case SlotKind::Alpha: flat(k) = alpha; break;
      case SlotKind::Momentum: flat(k) = momentum; break;
      case SlotKind::Intercept: flat(k) = intercept; break;
      case SlotKind::Network:
      case SlotKind::Weight: flat(k) = network; break;
    }
  }
  return ParamVector::unflatten(layout, flat);
}

ParamVector to_augmented(const ParamVector& theta, const ParamLayout& layout, const DirectedGraph& g) {
  check_layout(layout, theta);
  if (layout.augmented()) return theta;
  ParamVector out;
  out.alpha = theta.alpha;
  const std::size_t d = layout.d();
  out.beta.resize(d + (layout.intercept_slot(0) ? d : 0));
  out.beta.head(d) = theta.beta.head(d);
  if (layout.intercept_slot(0)) out.beta.tail(d) = theta.beta.tail(d);
  out.w = Eigen::VectorXd::Zero(d * (d - 1));
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto [i, j] = g.edges()[e];
    (*out.w)(i * (d - 1) + (j < i ? j : j - 1)) = theta.beta(d + e);
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> box_bounds(const NsdeSpec& spec, const ParamLayout& layout) {
  Eigen::VectorXd lo(layout.pi_total()), hi(layout.pi_total());
  for (std::size_t k = 0; k < layout.pi_total(); ++k) {
    const bool a = layout.is_alpha(k);
    lo(k) = a ? spec.bounds.alpha_lower : spec.bounds.lower;
    hi(k) = a ? spec.bounds.alpha_upper : spec.bounds.upper;
  }
  return {lo, hi};
}

// ---------------------------------------------------------------------------

DriftDesign::DriftDesign(const NsdeSpec& spec, const DirectedGraph& g, const ParamLayout& layout)
    : terms_(layout.d()) {
  if (const auto* radial = std::get_if<RadialDictionary>(&spec.drift)) {
    scales_ = radial->scales;
    exponents_ = radial->exponents;
  }
  const std::size_t d = layout.d();
  for (std::size_t i = 0; i < d; ++i) terms_[i].push_back({layout.momentum_slot(i), Feature::NegOwn, i});
  if (layout.augmented()) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (i != j) terms_[i].push_back({layout.weight_slot(i, j), Feature::Parent, j, 0});
  } else {
    const std::size_t basis = scales_.empty() ? 1 : scales_.size();
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
      const auto [i, j] = g.edges()[e];
      for (std::size_t l = 0; l < basis; ++l) terms_[i].push_back({layout.network_slot(e, l), Feature::Parent, j, l});
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    if (auto slot = layout.intercept_slot(i)) terms_[i].push_back({*slot, Feature::Constant, i});
    max_terms_ = std::max(max_terms_, terms_[i].size());
  }
}

void DriftDesign::basis_factors(std::span<const double> x, std::vector<double>& out) const {
  out.resize(scales_.size());
  if (scales_.empty()) return;
  double norm2 = 0.0;
  for (const double v : x) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  for (std::size_t l = 0; l < scales_.size(); ++l) out[l] = std::pow(scales_[l] + norm, -(exponents_[l] + 1.0));
}

void DriftDesign::features(std::span<const double> x, std::size_t node, std::span<const double> factors,
                           std::span<double> out) const {
  const auto& terms = terms_[node];
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const Term& t = terms[k];
    switch (t.feature) {
      case Feature::NegOwn: out[k] = -x[node]; break;
      case Feature::Constant: out[k] = 1.0; break;
      case Feature::Parent: out[k] = factors.empty() ? x[t.parent] : x[t.parent] * factors[t.basis]; break;
    }
  }
}

void DriftDesign::drift(std::span<const double> x, const Eigen::VectorXd& flat, std::span<double> out,
                        std::vector<double>& scratch) const {
  basis_factors(x, scratch);
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    double acc = 0.0;
    for (const Term& t : terms_[i]) {
      double f = 0.0;
      switch (t.feature) {
        case Feature::NegOwn: f = -x[i]; break;
        case Feature::Constant: f = 1.0; break;
        case Feature::Parent: f = scratch.empty() ? x[t.parent] : x[t.parent] * scratch[t.basis]; break;
      }
      acc += f * flat(static_cast<Eigen::Index>(t.slot));
    }
    out[i] = acc;
  }
}

double diffusion_shape(const DiffusionFamily& family, double xi) noexcept {
  if (const auto* tanh = std::get_if<TanhClipped>(&family)) {
    return tanh->c * std::tanh(std::sqrt(1.0 + xi * xi) / tanh->c);
  }
  return 1.0;
}

Eigen::VectorXd drift_eval(const NsdeSpec& spec, const DirectedGraph& g, const ParamVector& theta,
                           const Eigen::VectorXd& x) {
  const ParamLayout layout(spec, theta.augmented() ? DirectedGraph::complete(g.d()) : g, theta.augmented());
  check_layout(layout, theta);
  if (static_cast<std::size_t>(x.size()) != layout.d()) {
    throw Error(ErrorCode::DimensionMismatch, "state has " + std::to_string(x.size()) + " coordinates");
  }
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, "drift evaluated at non-finite state");
  const DriftDesign design(spec, theta.augmented() ? DirectedGraph::empty(g.d()) : g, layout);
  Eigen::VectorXd out(x.size());
  std::vector<double> scratch;
  design.drift({x.data(), static_cast<std::size_t>(x.size())}, theta.flatten(),
               {out.data(), static_cast<std::size_t>(out.size())}, scratch);
  return out;
}

Eigen::VectorXd diffusion_eval(const NsdeSpec& spec, const Eigen::VectorXd& alpha, const Eigen::VectorXd& x) {
  if (alpha.size() != x.size()) throw Error(ErrorCode::DimensionMismatch, "alpha and state sizes differ");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (alpha(i) < 0.0) throw Error(ErrorCode::NegativeAlpha, "alpha_" + std::to_string(i) + " < 0");
    out(i) = alpha(i) * diffusion_shape(spec.diffusion, x(i));
  }
  return out;
}

}  // namespace nsde
