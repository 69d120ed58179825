#include "nsde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nsde/community.hpp"
#include "nsde/error.hpp"
#include "nsde/estimate.hpp"
#include "nsde/rng.hpp"
#include "nsde/simulate.hpp"

namespace nsde {

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::ErrorBound: return "error_bound";
    case StudyKind::Er: return "er";
    case StudyKind::Polymer: return "polymer";
    case StudyKind::Sbm: return "sbm";
  }
  return "?";
}

std::string to_string(EstimatorKind kind) { return kind == EstimatorKind::ClosedForm ? "closed_form" : "qmle"; }

std::size_t StudyConfig::n() const { return static_cast<std::size_t>(std::llround(horizon / delta)); }

NsdeSpec StudyConfig::spec() const {
  NsdeSpec s;
  s.d = d;
  s.drift = LinearDrift{false};
  s.diffusion = diffusion;
  return s;
}

void StudyConfig::validate() const {
  if (d < 2) throw Error(ErrorCode::InvalidArgument, "study needs d >= 2");
  if (!(delta > 0.0) || !(horizon > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta and horizon must be positive");
  if (n() == 0) throw Error(ErrorCode::InvalidArgument, "horizon shorter than one observation interval");
  if (std::abs(static_cast<double>(n()) * delta - horizon) > 1e-9 * horizon) {
    throw Error(ErrorCode::InvalidArgument, "horizon is not a multiple of delta");
  }
  if (replications == 0) throw Error(ErrorCode::InvalidArgument, "replications must be >= 1");
  if (substeps == 0) throw Error(ErrorCode::InvalidSubsteps, "substeps must be >= 1");
  if (graph && graph->d() != d) throw Error(ErrorCode::DimensionMismatch, "graph dimension differs from d");
  if (!(alpha >= 0.0)) throw Error(ErrorCode::NegativeAlpha, "alpha must be non-negative");
}

const std::vector<ErrorTableRow>& error_table_reference() {
  static const std::vector<ErrorTableRow> rows = {
      {8, 20, 36, 10, 1.8, 2.0, 3.6, 0.94, 0.34},      {8, 20, 36, 20, 1.8, 1.0, 1.8, 0.52, 0.16},
      {8, 20, 36, 40, 1.8, 0.5, 0.9, 0.28, 0.08},      {8, 20, 36, 80, 1.8, 0.25, 0.45, 0.15, 0.04},
      {8, 20, 36, 100, 1.8, 0.2, 0.36, 0.12, 0.04},    {8, 20, 36, 160, 1.8, 0.125, 0.225, 0.08, 0.02},
      {8, 20, 36, 200, 1.8, 0.1, 0.18, 0.06, 0.02},    {8, 20, 36, 2000, 1.8, 0.01, 0.018, 0.007, 0.002},
      {16, 48, 80, 96, 1.7, 0.5, 1.35, 0.23, 0.03},    {16, 48, 80, 200, 1.7, 0.24, 0.4, 0.123, 0.02},
      {32, 100, 204, 200, 1.45, 0.5, 1.2, 0.23, 0.025},
  };
  return rows;
}

double bound_proxy(std::size_t pi, std::size_t edges, std::size_t n, double delta) {
  if (edges == 0) throw Error(ErrorCode::InvalidArgument, "bound proxy needs at least one edge");
  const double K = static_cast<double>(pi) / static_cast<double>(edges);
  const double eps = static_cast<double>(edges) / (static_cast<double>(n) * delta);
  return K * eps;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kSeedSearchLimit = 200000;

Eigen::MatrixXd network_matrix(const DirectedGraph& g, double beta) { return beta * g.adjacency(); }

double singular_margin(const DirectedGraph& g, double mu, double beta) {
  return ergodicity_margin(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.d()), mu), network_matrix(g, beta),
                           MarginMode::Singular);
}

}  // namespace

ReferenceGraph find_fixed_edge_graph(std::size_t d, std::size_t edges, double mu, double beta, std::uint64_t start) {
  if (d < 2 || edges > d * (d - 1)) throw Error(ErrorCode::InvalidArgument, "edge count outside [0, d(d-1)]");
  const ErdosRenyi er{static_cast<double>(edges) / static_cast<double>(d * (d - 1))};
  for (std::uint64_t s = start; s < start + kSeedSearchLimit; ++s) {
    DirectedGraph g = generate(er, d, s);
    if (g.edge_count() == edges && singular_margin(g, mu, beta) > 0.0) return {std::move(g), s};
  }
  throw Error(ErrorCode::InvalidArgument, "no graph with the requested edge count and a positive margin");
}

ReferenceGraph find_er_reference(std::size_t d, double p, double beta, std::size_t max_in_degree, double tau_low,
                                 double tau_high, std::uint64_t start) {
  for (std::uint64_t s = start; s < start + kSeedSearchLimit; ++s) {
    DirectedGraph g = generate(ErdosRenyi{p}, d, s);
    const auto deg = degree_distribution(g);
    if (*std::max_element(deg.in_degrees.begin(), deg.in_degrees.end()) != max_in_degree) continue;
    const double tau = largest_singular_value(network_matrix(g, beta));
    if (tau >= tau_low && tau <= tau_high) return {std::move(g), s};
  }
  throw Error(ErrorCode::InvalidArgument, "no Erdos-Renyi draw matches the reference criteria");
}

// ---------------------------------------------------------------------------

StudyConfig error_table_config(std::size_t d, std::size_t edges, double horizon) {
  StudyConfig c;
  c.name = "error_table_d" + std::to_string(d) + "_T" + std::to_string(static_cast<long long>(horizon));
  c.kind = StudyKind::ErrorBound;
  c.d = d;
  c.graph = find_fixed_edge_graph(d, edges, c.mu, c.beta).graph;
  c.horizon = horizon;
  c.replications = 100;
  c.estimator = EstimatorKind::ClosedForm;
  return c;
}

namespace {

LassoOptions study_lasso(SelectionRule rule) {
  LassoOptions o;
  o.rule = rule;
  o.delta = {1.0, 1.0, 1.0};
  o.refit_options.restarts = 1;
  return o;
}

}  // namespace

StudyConfig er_study_config() {
  StudyConfig c;
  c.name = "er_d10";
  c.kind = StudyKind::Er;
  c.d = 10;
  c.recipe = ErdosRenyi{0.25};
  const ReferenceGraph ref = find_er_reference();
  c.graph = ref.graph;
  c.graph_seed = ref.seed;
  c.horizon = 200.0;
  c.replications = 50;
  c.lasso = study_lasso(SelectionRule::fixed_fraction(0.1));
  return c;
}

StudyConfig polymer_study_config() {
  StudyConfig c;
  c.name = "polymer_d12";
  c.kind = StudyKind::Polymer;
  c.d = 12;
  c.recipe = Polymer::every_third(12);
  c.graph = generate(c.recipe, c.d, 0);
  c.horizon = 200.0;
  c.replications = 50;
  c.lasso = study_lasso(SelectionRule::half_se());
  return c;
}

StudyConfig sbm_study_config() {
  StudyConfig c;
  c.name = "sbm_d21";
  c.kind = StudyKind::Sbm;
  c.d = 21;
  c.recipe = StochasticBlock{{4, 11, 6}, 0.9, 0.05};
  c.redraw_graph = true;
  // beta = 2 would leave the dense 11-block far outside the ergodic region.
  c.beta = 0.6;
  c.horizon = 400.0;
  c.replications = 30;
  c.lasso = study_lasso(SelectionRule::half_se());
  return c;
}

ParamVector true_parameters(const StudyConfig& config, const DirectedGraph& g) {
  const ParamLayout layout(config.spec(), g, false);
  return uniform_params(layout, config.alpha, config.mu, config.beta);
}

namespace {

DirectedGraph replication_graph(const StudyConfig& c, std::size_t index) {
  if (c.graph) return *c.graph;
  if (c.redraw_graph) return generate(c.recipe, c.d, mix_seed(c.graph_seed, index));
  return generate(c.recipe, c.d, c.graph_seed);
}

SamplePath replication_path(const StudyConfig& c, const DirectedGraph& g, std::uint64_t seed) {
  SimulationOptions opts;
  opts.delta = c.delta;
  opts.n = c.n();
  opts.substeps = c.substeps;
  opts.burn_in_steps = c.burn_in_steps;
  opts.seed = seed;
  return simulate_path(c.spec(), g, true_parameters(c, g), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.d)),
                       opts);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

StudyReport report_header(const StudyConfig& c) {
  StudyReport r;
  r.name = c.name;
  r.kind = c.kind;
  r.d = c.d;
  r.horizon = c.horizon;
  r.delta = c.delta;
  r.n = c.n();
  std::ostringstream note;
  note << "delta = " << c.delta << ", n = T / delta = " << r.n << ", substeps = " << c.substeps
       << ", burn-in = " << c.burn_in_steps << " intervals, replications = " << c.replications;
  r.notes.push_back(note.str());
  return r;
}

void fill_margins(ReplicationRecord& rec, const StudyConfig& c, const DirectedGraph& g) {
  const Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(c.d), c.mu);
  rec.margin_singular = ergodicity_margin(mu, network_matrix(g, c.beta), MarginMode::Singular);
  rec.margin_rowsum = ergodicity_margin(mu, network_matrix(g, c.beta), MarginMode::RowSum);
}

}  // namespace

StudyReport error_bound_study(const StudyConfig& config) {
  config.validate();
  const NsdeSpec spec = config.spec();
  StudyReport report = report_header(config);
  report.replications.resize(config.replications);

  parallel_for(config.replications, config.parallelism, [&](std::size_t r) {
    const DirectedGraph g = replication_graph(config, r);
    ReplicationRecord rec;
    rec.index = r;
    rec.seed = mix_seed(config.seed, r);
    rec.edges = g.edge_count();
    fill_margins(rec, config, g);
    const SamplePath path = replication_path(config, g, rec.seed);
    const ParamVector truth = true_parameters(config, g);
    const ParamLayout layout(spec, g, false);

    const Eigen::VectorXd alpha = stage_one_alpha(path, spec);
    const ClosedFormFit cf = fit_linear_closed_form(path, g, sigma_hat_matrix(path, spec, alpha), false);
    ParamVector est{alpha, cf.beta, std::nullopt};
    if (config.estimator == EstimatorKind::Qmle) {
      const auto [lo, hi] = box_bounds(spec, layout);
      FitOptions fo;
      fo.restarts = 1;
      const FitResult fit =
          fit_qmle(path, spec, g, ParamVector::unflatten(layout, est.flatten().cwiseMax(lo).cwiseMin(hi)), fo);
      est = fit.theta_hat;
      rec.converged = fit.converged;
    }
    rec.squared_error = (est.flatten() - truth.flatten()).squaredNorm();
    rec.per_coordinate_error = rec.squared_error / static_cast<double>(layout.pi_total());
    report.replications[r] = rec;
  });

  const DirectedGraph g0 = replication_graph(config, 0);
  report.edges = g0.edge_count();
  report.pi = ParamLayout(spec, g0, false).pi_total();
  report.K = static_cast<double>(report.pi) / static_cast<double>(report.edges);
  report.epsilon = static_cast<double>(report.edges) / (static_cast<double>(report.n) * report.delta);
  report.bound = report.K * report.epsilon;

  std::vector<double> err, per;
  for (const auto& rec : report.replications) {
    err.push_back(rec.squared_error);
    per.push_back(rec.per_coordinate_error);
  }
  report.mean_error = mean_of(err);
  report.sd_error = sd_of(err);
  report.mean_per_coordinate = mean_of(per);
  report.sd_per_coordinate = sd_of(per);
  report.notes.push_back("estimator = " + to_string(config.estimator) + "; Bound = K * eps, K = pi / |E|, eps = |E| / T");
  for (const auto& row : error_table_reference()) {
    if (row.d == report.d && row.edges == report.edges && row.horizon == report.horizon &&
        std::abs(row.K * row.epsilon - row.bound) > 0.01 * row.bound) {
      std::ostringstream note;
      note << "reference row (d=" << row.d << ", T=" << row.horizon << ") lists Bound " << row.bound
           << " but K * eps = " << row.K * row.epsilon;
      report.notes.push_back(note.str());
    }
  }
  return report;
}

EdgeConfusion compare_adjacency(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth) {
  if (est.rows() != truth.rows() || est.cols() != truth.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "adjacency matrices differ in size");
  }
  EdgeConfusion c;
  for (Eigen::Index i = 0; i < est.rows(); ++i)
    for (Eigen::Index j = 0; j < est.cols(); ++j) {
      if (i == j) continue;
      const bool e = est(i, j) != 0.0;
      const bool t = truth(i, j) != 0.0;
      if (e && t) ++c.true_positives;
      if (e && !t) {
        ++c.false_positives;
        if (truth(j, i) != 0.0) ++c.false_reverse;
      }
      if (!e && t) ++c.false_negatives;
    }
  return c;
}

ReplicationRecord recovery_replication(const StudyConfig& config, std::size_t index, LassoFit* fit_out) {
  config.validate();
  const NsdeSpec spec = config.spec();
  const DirectedGraph g = replication_graph(config, index);
  ReplicationRecord rec;
  rec.index = index;
  rec.seed = mix_seed(config.seed, index);
  rec.edges = g.edge_count();
  fill_margins(rec, config, g);
  const SamplePath path = replication_path(config, g, rec.seed);

  LassoOptions opts = config.lasso;
  opts.path_options.parallelism = Parallelism{1};
  LassoFit fit = fit_adaptive_lasso(path, spec, opts);

  const Eigen::MatrixXd truth = g.adjacency();
  const EdgeConfusion conf = compare_adjacency(fit.adjacency, truth);
  rec.true_positives = conf.true_positives;
  rec.false_positives = conf.false_positives;
  rec.false_negatives = conf.false_negatives;
  rec.false_reverse = conf.false_reverse;
  rec.exact_recovery = conf.false_positives == 0 && conf.false_negatives == 0;
  const std::size_t found = conf.true_positives + conf.false_positives;
  const std::size_t real = conf.true_positives + conf.false_negatives;
  rec.precision = found ? static_cast<double>(conf.true_positives) / static_cast<double>(found) : 1.0;
  rec.recall = real ? static_cast<double>(conf.true_positives) / static_cast<double>(real) : 1.0;
  rec.lambda_max = fit.path.lambda_max;
  rec.lambda_selected = fit.lambda_selected;

  if (const auto* sbm = std::get_if<StochasticBlock>(&config.recipe); sbm && config.kind == StudyKind::Sbm) {
    const auto labels = detect_communities(fit.adjacency);
    rec.communities = community_count(labels);
    rec.agreement = agreement(labels, sbm->memberships());
  }

  if (fit.refit) {
    const FitResult& refit = *fit.refit;
    const DirectedGraph ghat = DirectedGraph::from_adjacency(fit.adjacency);
    rec.alpha_max_error = (refit.theta_hat.alpha.array() - config.alpha).abs().maxCoeff();
    double sum = 0.0;
    for (const auto& e : g.edges()) {
      const auto k = ghat.edge_index(e.child, e.parent);
      const double b = k >= 0 ? refit.theta_hat.beta(static_cast<Eigen::Index>(config.d) + k) : 0.0;
      sum += std::abs(b - config.beta);
    }
    rec.beta_mean_error = g.edge_count() ? sum / static_cast<double>(g.edge_count()) : 0.0;
    rec.converged = refit.converged;
  }
  if (fit_out) *fit_out = std::move(fit);
  return rec;
}

StudyReport recovery_study(const StudyConfig& config) {
  config.validate();
  StudyReport report = report_header(config);
  report.replications.resize(config.replications);
  parallel_for(config.replications, config.parallelism,
               [&](std::size_t r) { report.replications[r] = recovery_replication(config, r); });

  std::vector<double> exact, prec, rec, rev, comm, agree, edges;
  std::size_t blocks = 0;
  if (const auto* sbm = std::get_if<StochasticBlock>(&config.recipe)) blocks = sbm->block_sizes.size();
  for (const auto& r : report.replications) {
    exact.push_back(r.exact_recovery ? 1.0 : 0.0);
    prec.push_back(r.precision);
    rec.push_back(r.recall);
    rev.push_back(r.false_reverse == 0 ? 1.0 : 0.0);
    comm.push_back(r.communities == blocks && r.agreement >= 0.9 ? 1.0 : 0.0);
    agree.push_back(r.agreement);
    edges.push_back(static_cast<double>(r.edges));
  }
  report.edges = static_cast<std::size_t>(std::llround(mean_of(edges)));
  report.pi = 2 * config.d + config.d * (config.d - 1);
  report.recovery_rate = mean_of(exact);
  report.mean_precision = mean_of(prec);
  report.mean_recall = mean_of(rec);
  report.reverse_free_rate = mean_of(rev);
  if (config.kind == StudyKind::Sbm) {
    report.community_success_rate = mean_of(comm);
    report.mean_agreement = mean_of(agree);
  }
  report.notes.push_back("selection rule = " + to_string(config.lasso.rule));
  return report;
}

StudyReport run_study(const StudyConfig& config) {
  return config.kind == StudyKind::ErrorBound ? error_bound_study(config) : recovery_study(config);
}

std::vector<std::size_t> cluster_lambda_curve(const LassoPath& path, double resolution) {
  std::vector<std::size_t> out;
  out.reserve(path.adjacency.size());
  for (const auto& A : path.adjacency) out.push_back(community_count(detect_communities(A, resolution)));
  return out;
}

}  // namespace nsde
