#include "nsde/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "nsde/community.hpp"
#include "nsde/error.hpp"
#include "nsde/estimate.hpp"
#include "nsde/experiments.hpp"
#include "nsde/graph.hpp"
#include "nsde/ingest.hpp"
#include "nsde/lasso.hpp"
#include "nsde/model.hpp"
#include "nsde/simulate.hpp"

#ifndef NSDE_VERSION
#define NSDE_VERSION "unknown"
#endif

namespace nsde {

namespace fs = std::filesystem;

std::string version_string() { return std::string("nsde ") + NSDE_VERSION; }

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  Json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("--set: empty path component in '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw UsageError("--set: '" + key.substr(0, start - 1) + "' is not an object");
      *node = Json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

namespace {

// Typed view of a config node that names the failing field in every error.
class Field {
 public:
  Field(const Json* j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const Json& json() const { return *j_; }
  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key) && !(*j_)[key].is_null(); }

  Field at(const std::string& key) const {
    if (!has(key)) throw UsageError("missing config field '" + child_path(key) + "'");
    return Field(&(*j_)[key], child_path(key));
  }

  double number() const {
    if (!j_->is_number()) fail("a number");
    return j_->get<double>();
  }
  std::uint64_t unsigned_int() const {
    if (!j_->is_number_unsigned()) fail("a non-negative integer");
    return j_->get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) fail("true or false");
    return j_->get<bool>();
  }
  std::string string() const {
    if (!j_->is_string()) fail("a string");
    return j_->get<std::string>();
  }
  std::vector<double> numbers() const {
    if (!j_->is_array()) fail("an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < j_->size(); ++k) out.push_back(Field(&(*j_)[k], path_ + "[" + std::to_string(k) + "]").number());
    return out;
  }
  std::vector<std::size_t> indices() const {
    if (!j_->is_array()) fail("an array of non-negative integers");
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < j_->size(); ++k)
      out.push_back(static_cast<std::size_t>(Field(&(*j_)[k], path_ + "[" + std::to_string(k) + "]").unsigned_int()));
    return out;
  }

  double number(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
  double positive(const std::string& key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("config field '" + child_path(key) + "': must be positive");
    return v;
  }
  std::size_t size(const std::string& key, std::size_t fallback) const {
    return has(key) ? static_cast<std::size_t>(at(key).unsigned_int()) : fallback;
  }
  bool boolean(const std::string& key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }
  std::string string(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key).string() : fallback;
  }

  [[noreturn]] void fail(const std::string& expected) const {
    throw UsageError("config field '" + path_ + "': expected " + expected);
  }

 private:
  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* j_;
  std::string path_;
};

struct Context {
  std::string command;
  Json config;
  fs::path base_dir;
  fs::path out_dir;
  std::uint64_t seed = 0;
  Parallelism parallelism{};
  std::vector<std::string> outputs;
  std::ostream* out = nullptr;

  Field root() const { return Field(&config, ""); }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  void write(const std::string& name, const std::string& text) {
    write_text_file(out_dir / name, text);
    outputs.push_back(name);
  }
  void write_json(const std::string& name, const Json& j) { write(name, j.dump(2) + "\n"); }
};

GraphRecipe read_recipe(const Field& f, std::size_t d) {
  const std::string type = f.at("type").string();
  if (type == "er") return ErdosRenyi{f.at("p").number()};
  if (type == "polymer") {
    if (f.has("double_links")) return Polymer{f.at("double_links").indices()};
    return Polymer::every_third(d);
  }
  if (type == "sbm") {
    return StochasticBlock{f.at("blocks").indices(), f.at("p_in").number(), f.at("p_ex").number()};
  }
  throw UsageError("config field '" + f.path() + ".type': unknown recipe '" + type + "' (er, polymer, sbm)");
}

struct GraphInput {
  DirectedGraph graph;
  std::optional<std::vector<std::size_t>> memberships;  // planted blocks of an SBM recipe
};

// "graph": a file name, {d, edges}, or {d, recipe, seed}.
GraphInput read_graph(const Context& ctx, const Field& f) {
  if (f.json().is_string()) return {load_graph(ctx.resolve(f.string())), std::nullopt};
  if (!f.json().is_object()) f.fail("a file name or an object");
  const std::size_t d = static_cast<std::size_t>(f.at("d").unsigned_int());
  if (f.has("edges")) {
    try {
      return {graph_from_json(f.json()), std::nullopt};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ParseError) throw UsageError("config field '" + f.path() + ".edges': " + e.what());
      throw;
    }
  }
  const GraphRecipe recipe = read_recipe(f.at("recipe"), d);
  const std::uint64_t seed = f.has("seed") ? f.at("seed").unsigned_int() : ctx.seed;
  GraphInput in{generate(recipe, d, seed), std::nullopt};
  if (const auto* sbm = std::get_if<StochasticBlock>(&recipe)) in.memberships = sbm->memberships();
  return in;
}

NsdeSpec read_model(const Field& root, std::size_t d) {
  if (!root.has("model")) return spec_from_json(Json::object(), d);
  const Field m = root.at("model");
  if (!m.json().is_object()) m.fail("an object");
  try {
    return spec_from_json(m.json(), d);
  } catch (const Error& e) {
    throw UsageError("config field '" + m.path() + "': " + e.what());
  }
}

// Scalar (same value in every slot) or array (one value per slot of that kind).
void fill_block(const Field& f, const std::string& key, Eigen::Ref<Eigen::VectorXd> block, double fallback) {
  if (!f.has(key)) {
    block.setConstant(fallback);
    return;
  }
  const Field v = f.at(key);
  if (v.json().is_number()) {
    block.setConstant(v.number());
    return;
  }
  const auto values = v.numbers();
  if (values.size() != static_cast<std::size_t>(block.size())) {
    throw UsageError("config field '" + v.path() + "': expected " + std::to_string(block.size()) + " values");
  }
  for (std::size_t k = 0; k < values.size(); ++k) block(static_cast<Eigen::Index>(k)) = values[k];
}

// "params": {alpha, mu, beta, intercept}; beta runs over network slots in edge order.
ParamVector read_params(const Field& f, const NsdeSpec& spec, const ParamLayout& layout) {
  ParamVector theta = uniform_params(layout, 1.0, 1.0, 0.0);
  const std::size_t d = layout.d();
  const std::size_t network = layout.pi_beta() - d - (spec.has_intercepts() ? d : 0);
  fill_block(f, "alpha", theta.alpha, 1.0);
  fill_block(f, "mu", theta.beta.head(static_cast<Eigen::Index>(d)), 1.0);
  fill_block(f, "beta", theta.beta.segment(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(network)), 0.0);
  if (spec.has_intercepts()) fill_block(f, "intercept", theta.beta.tail(static_cast<Eigen::Index>(d)), 0.0);
  return theta;
}

SamplePath read_path(const Context& ctx, const Field& root) {
  return load_path_csv(ctx.resolve(root.at("path").string()));
}

SelectionRule read_rule(const Field& f) {
  const std::string rule = f.string("rule", "half_se");
  if (rule == "half_se") return SelectionRule::half_se();
  if (rule == "min") return SelectionRule::min();
  if (rule == "fixed_fraction") return SelectionRule::fixed_fraction(f.number("fraction", 0.1));
  throw UsageError("config field 'rule': unknown rule '" + rule + "' (half_se, min, fixed_fraction)");
}

LassoOptions read_lasso_options(const Field& root, const Context& ctx) {
  LassoOptions o;
  if (root.has("delta_weights")) {
    const auto v = root.at("delta_weights").numbers();
    if (v.size() != 3) throw UsageError("config field 'delta_weights': expected 3 values");
    o.delta = {v[0], v[1], v[2]};
  }
  o.cap = root.positive("cap", o.cap);
  o.penalize_alpha = root.boolean("penalize_alpha", o.penalize_alpha);
  o.penalize_beta = root.boolean("penalize_beta", o.penalize_beta);
  const std::string hessian = root.string("hessian", "analytic");
  if (hessian == "numerical") {
    o.hessian = HessianKind::Numerical;
  } else if (hessian != "analytic") {
    throw UsageError("config field 'hessian': expected analytic or numerical");
  }
  if (root.has("grid")) {
    const Field g = root.at("grid");
    o.grid.count = g.size("count", o.grid.count);
    o.grid.min_fraction = g.positive("min_fraction", o.grid.min_fraction);
  }
  o.rule = read_rule(root);
  if (root.has("validation")) {
    const Field v = root.at("validation");
    const std::string scheme = v.string("scheme", "kfold");
    if (scheme == "kfold") {
      o.validation = ValidationScheme::blocked_kfold(v.size("folds", 5));
    } else if (scheme == "holdout") {
      o.validation = ValidationScheme::holdout_tail(v.positive("fraction", 0.2));
    } else {
      throw UsageError("config field 'validation.scheme': expected kfold or holdout");
    }
  }
  o.always_validate = root.boolean("always_validate", o.always_validate);
  o.zero_tol = root.number("zero_tol", o.zero_tol);
  o.refit = root.boolean("refit", o.refit);
  o.refit_options.restarts = root.size("restarts", o.refit_options.restarts);
  o.refit_options.seed = ctx.seed;
  o.refit_options.parallelism = ctx.parallelism;
  o.path_options.parallelism = ctx.parallelism;
  return o;
}

// ---------------------------------------------------------------------------

int cmd_graph_gen(Context& ctx) {
  const Field root = ctx.root();
  const GraphInput in = read_graph(ctx, root.at("graph"));
  const DirectedGraph& g = in.graph;
  ctx.write("graph.edges", format_edge_list(g));
  ctx.write_json("graph.json", graph_to_json(g));
  ctx.write("graph.dot", format_dot(g));

  const DegreeHistogram deg = degree_distribution(g);
  Json summary{{"d", g.d()}, {"edges", g.edge_count()}, {"in_degrees", deg.in_degrees}, {"out_degrees", deg.out_degrees}};
  Json hist = Json::object();
  for (const auto& [degree, count] : deg.histogram) hist[std::to_string(degree)] = count;
  summary["degree_histogram"] = hist;
  if (root.has("mu") && root.has("beta")) {
    const Eigen::VectorXd mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.d()), root.at("mu").number());
    const Eigen::MatrixXd B = root.at("beta").number() * g.adjacency();
    summary["tau_max"] = largest_singular_value(B);
    summary["margin_singular"] = ergodicity_margin(mu, B, MarginMode::Singular);
    summary["margin_rowsum"] = ergodicity_margin(mu, B, MarginMode::RowSum);
  }
  if (in.memberships) summary["memberships"] = *in.memberships;
  ctx.write_json("graph_summary.json", summary);
  *ctx.out << "graph-gen: d=" << g.d() << " edges=" << g.edge_count() << "\n";
  return 0;
}

int cmd_simulate(Context& ctx) {
  const Field root = ctx.root();
  const DirectedGraph g = read_graph(ctx, root.at("graph")).graph;
  const NsdeSpec spec = read_model(root, g.d());
  const ParamLayout layout(spec, g, false);
  static const Json no_params = Json::object();
  const ParamVector theta = read_params(root.has("params") ? root.at("params") : Field(&no_params, "params"), spec, layout);

  SimulationOptions o;
  o.delta = root.positive("delta", 0.01);
  if (root.has("n")) {
    o.n = root.size("n", 0);
  } else {
    const double horizon = root.positive("horizon", 10.0);
    o.n = static_cast<std::size_t>(std::llround(horizon / o.delta));
  }
  o.substeps = root.size("substeps", o.substeps);
  o.burn_in_steps = root.size("burn_in", o.burn_in_steps);
  o.explosion_threshold = root.positive("explosion_threshold", o.explosion_threshold);
  o.seed = ctx.seed;

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.d()));
  fill_block(root, "x0", x0, 0.0);

  const SamplePath path = simulate_path(spec, g, theta, x0, o);
  ctx.write("path.csv", format_path_csv(path));
  ctx.write_json("truth.json", Json{{"model", spec_to_json(spec)},
                                    {"graph", graph_to_json(g)},
                                    {"params", params_to_json(theta, layout)}});
  *ctx.out << "simulate: d=" << path.d() << " n=" << path.n() << " delta=" << path.delta << "\n";
  return 0;
}

int cmd_fit(Context& ctx) {
  const Field root = ctx.root();
  const SamplePath path = read_path(ctx, root);
  const DirectedGraph g = read_graph(ctx, root.at("graph")).graph;
  if (g.d() != path.d()) throw UsageError("config field 'graph': d = " + std::to_string(g.d()) + " but the path has " + std::to_string(path.d()) + " columns");
  const NsdeSpec spec = read_model(root, g.d());
  const ParamLayout layout(spec, g, false);
  const std::string method = root.string("method", "qmle");

  if (method == "closed_form") {
    if (!std::holds_alternative<LinearDrift>(spec.drift)) throw UsageError("config field 'method': closed_form needs the linear drift");
    const ParamVector theta = linear_pilot(path, spec, g, false);
    ctx.write_json("fit.json", Json{{"method", "closed_form"}, {"n", path.n()}, {"delta", path.delta},
                                    {"parameters", params_to_json(theta, layout)}});
    *ctx.out << "fit: closed form, " << layout.pi_total() << " parameters\n";
    return 0;
  }
  if (method != "qmle") throw UsageError("config field 'method': expected qmle or closed_form");

  FitOptions o;
  const std::string mode = root.string("mode", "joint");
  if (mode == "adaptive") {
    o.mode = FitMode::Adaptive;
  } else if (mode != "joint") {
    throw UsageError("config field 'mode': expected joint or adaptive");
  }
  o.restarts = root.size("restarts", o.restarts);
  o.max_iterations = root.size("max_iterations", o.max_iterations);
  o.seed = ctx.seed;
  o.parallelism = ctx.parallelism;

  ParamVector init;
  if (root.has("init")) {
    init = read_params(root.at("init"), spec, layout);
  } else {
    // The contrast is quadratic in the drift, so its exact minimizer is the natural start.
    const DriftDesign design(spec, g, layout);
    const ContrastStats stats(path, spec, layout, design, IncrementSet::all(path.n()));
    const auto [lower, upper] = box_bounds(spec, layout);
    init = ParamVector::unflatten(layout, joint_qmle_closed_form(stats).cwiseMax(lower).cwiseMin(upper));
  }
  const FitResult fit = fit_qmle(path, spec, g, init, o);
  Json j = fit_to_json(fit);
  j["method"] = "qmle";
  j["mode"] = mode;
  ctx.write_json("fit.json", j);
  *ctx.out << "fit: contrast=" << format_double(fit.contrast_value) << " converged=" << (fit.converged ? "yes" : "no")
           << "\n";
  return 0;
}

int cmd_lasso(Context& ctx) {
  const Field root = ctx.root();
  const SamplePath path = read_path(ctx, root);
  const NsdeSpec spec = read_model(root, path.d());
  const LassoOptions o = read_lasso_options(root, ctx);
  const LassoFit fit = fit_adaptive_lasso(path, spec, o);
  const ParamLayout layout(spec, DirectedGraph::complete(path.d()), true);

  ctx.write("lasso_path.csv", format_lasso_path_csv(fit.path, layout));
  ctx.write("adjacency_path.txt", format_adjacency_path(fit.path));
  ctx.write("graph.edges", format_edge_list(DirectedGraph::from_adjacency(fit.adjacency)));
  ctx.write_json("selection.json", selection_to_json(fit, o.rule));
  if (fit.path.validation_loss) {
    std::string cv = "lambda,loss,se\n";
    for (std::size_t k = 0; k < fit.path.lambdas.size(); ++k)
      cv += format_double(fit.path.lambdas[k]) + "," + format_double((*fit.path.validation_loss)[k]) + "," +
            format_double((*fit.path.validation_se)[k]) + "\n";
    ctx.write("validation.csv", cv);
  }
  if (fit.refit) ctx.write_json("refit.json", fit_to_json(*fit.refit));
  *ctx.out << "lasso: lambda_max=" << format_double(fit.path.lambda_max)
           << " lambda=" << format_double(fit.lambda_selected) << " edges=" << fit.adjacency.sum() << "\n";
  return 0;
}

StudyConfig base_study(const std::string& study, const Field& root) {
  if (study == "error_table") {
    return error_table_config(root.size("d", 8), root.size("edges", 20), 10.0);
  }
  if (study == "er") return er_study_config();
  if (study == "polymer") return polymer_study_config();
  if (study == "sbm") return sbm_study_config();
  throw UsageError("config field 'study': expected error_table, er, polymer or sbm");
}

int cmd_bench(Context& ctx) {
  const Field root = ctx.root();
  const std::string study = root.string("study", "error_table");
  StudyConfig c = base_study(study, root);
  c.seed = ctx.seed;
  c.parallelism = ctx.parallelism;
  c.lasso.path_options.parallelism = Parallelism{1};
  c.replications = root.size("replications", c.replications);
  c.mu = root.number("mu", c.mu);
  c.beta = root.number("beta", c.beta);
  c.alpha = root.positive("alpha", c.alpha);
  c.delta = root.positive("delta", c.delta);
  c.substeps = root.size("substeps", c.substeps);
  c.burn_in_steps = root.size("burn_in", c.burn_in_steps);
  if (root.has("estimator")) {
    const std::string e = root.at("estimator").string();
    if (e == "qmle") {
      c.estimator = EstimatorKind::Qmle;
    } else if (e == "closed_form") {
      c.estimator = EstimatorKind::ClosedForm;
    } else {
      throw UsageError("config field 'estimator': expected closed_form or qmle");
    }
  }
  if (root.has("rule")) c.lasso.rule = read_rule(root);

  std::vector<double> horizons;
  if (root.has("horizons")) {
    horizons = root.at("horizons").numbers();
  } else if (root.has("horizon")) {
    horizons = {root.positive("horizon", 1.0)};
  } else if (study == "error_table") {
    horizons = {10.0, 20.0, 40.0, 80.0};
  } else {
    horizons = {c.horizon};
  }

  std::string table = "d,E,pi,T,K,epsilon,bound,mean,sd";
  const bool recovery = study != "error_table";
  if (recovery) table += ",recovery_rate,mean_precision,mean_recall,reverse_free_rate,community_success_rate";
  table += "\n";
  Json summaries = Json::array();
  for (const double T : horizons) {
    if (!(T > 0.0)) throw UsageError("config field 'horizons': values must be positive");
    c.horizon = T;
    c.validate();
    const StudyReport r = run_study(c);
    char name[64];
    std::snprintf(name, sizeof name, "study_T%g.csv", T);
    ctx.write(name, format_study_csv(r));
    table += std::to_string(r.d) + "," + std::to_string(r.edges) + "," + std::to_string(r.pi) + "," +
             format_double(r.horizon) + "," + format_double(r.K) + "," + format_double(r.epsilon) + "," +
             format_double(r.bound) + "," + format_double(r.mean_per_coordinate) + "," +
             format_double(r.sd_per_coordinate);
    if (recovery) {
      table += "," + format_double(r.recovery_rate) + "," + format_double(r.mean_precision) + "," +
               format_double(r.mean_recall) + "," + format_double(r.reverse_free_rate) + "," +
               format_double(r.community_success_rate);
    }
    table += "\n";
    summaries.push_back(study_summary_json(r));
    *ctx.out << "bench " << study << ": T=" << T << " mean=" << format_double(r.mean_per_coordinate);
    if (recovery) *ctx.out << " recovery=" << r.recovery_rate;
    *ctx.out << "\n";
  }
  ctx.write("summary.csv", table);
  ctx.write_json("summary.json", summaries);
  return 0;
}

int cmd_ingest(Context& ctx) {
  const Field root = ctx.root();
  const fs::path input = ctx.resolve(root.at("input").string());
  std::vector<std::string> markers{"", "NA", "NaN"};
  if (root.has("missing_markers")) {
    const Field m = root.at("missing_markers");
    if (!m.json().is_array()) m.fail("an array of strings");
    markers.clear();
    for (std::size_t k = 0; k < m.json().size(); ++k)
      markers.push_back(Field(&m.json()[k], m.path() + "[" + std::to_string(k) + "]").string());
  }
  PanelData panel = load_panel_csv(input, markers);
  if (root.boolean("complete_cases", true)) panel = complete_cases(panel);
  const PanelTransform transform = [&] {
    try {
      return parse_transform(root.string("transform", "levels"));
    } catch (const Error& e) {
      throw UsageError(std::string("config field 'transform': ") + e.what());
    }
  }();
  std::optional<double> delta;
  if (root.has("delta")) delta = root.positive("delta", 1.0);
  const SamplePath path = to_sample_path(panel, transform, delta);
  ctx.write("path.csv", format_path_csv(path));
  ctx.write_json("ingest_report.json",
                 Json{{"rows", panel.rows()},
                      {"d", panel.d()},
                      {"series_names", panel.series_names},
                      {"dropped_columns", panel.dropped_columns},
                      {"inferred_delta", panel.inferred_delta},
                      {"irregular_gaps", panel.irregular_gaps},
                      {"transform", to_string(transform)},
                      {"path_delta", path.delta},
                      {"time_unit", delta ? "user supplied" : "one observation interval"}});
  *ctx.out << "ingest: d=" << path.d() << " n=" << path.n() << " dropped=" << panel.dropped_columns.size() << "\n";
  return 0;
}

int cmd_communities(Context& ctx) {
  const Field root = ctx.root();
  const GraphInput in = read_graph(ctx, root.at("graph"));
  const double resolution = root.positive("resolution", 1.0);
  const auto labels = detect_communities(in.graph, resolution);
  Json j{{"d", in.graph.d()},
         {"communities", community_count(labels)},
         {"labels", labels},
         {"modularity", modularity(in.graph, labels, resolution)}};
  std::optional<std::vector<std::size_t>> truth = in.memberships;
  if (root.has("truth")) truth = root.at("truth").indices();
  if (truth) {
    if (truth->size() != in.graph.d()) throw UsageError("config field 'truth': expected one label per vertex");
    j["agreement"] = agreement(labels, *truth);
  }
  ctx.write_json("communities.json", j);
  *ctx.out << "communities: " << community_count(labels) << " found\n";
  return 0;
}

using Command = int (*)(Context&);

const std::vector<std::pair<std::string, Command>>& commands() {
  static const std::vector<std::pair<std::string, Command>> table{
      {"graph-gen", cmd_graph_gen}, {"simulate", cmd_simulate}, {"fit", cmd_fit},
      {"lasso", cmd_lasso},         {"bench", cmd_bench},       {"ingest", cmd_ingest},
      {"communities", cmd_communities}};
  return table;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args = raw_args;
  if (!args.empty() && args.front() == "run") args.erase(args.begin());

  CLI::App app{"Network SDE simulation, estimation and graph recovery", "nsde"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  unsigned threads = 0;
  std::vector<std::string> overrides;
  app.add_option("--seed", seed, "Seed; overrides the config's seed");
  app.add_option("--out-dir", out_dir, "Directory for outputs (created if missing)");
  app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  app.add_option("--set", overrides, "Dotted-path override key=value")->take_all();

  std::string config_path;
  for (const auto& [name, fn] : commands()) {
    app.add_subcommand(name, "")->add_option("config", config_path, "JSON config")->required();
  }

  // CLI11 wants reversed argv order in its vector overload.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  Context ctx;
  ctx.out = &out;
  const auto started = std::chrono::steady_clock::now();
  try {
    ctx.command = app.get_subcommands().front()->get_name();
    const fs::path cfg(config_path);
    if (!fs::is_regular_file(cfg)) throw UsageError("config file not found: " + config_path);
    try {
      ctx.config = Json::parse(read_text_file(cfg));
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("config " + config_path + ": " + e.what());
    }
    if (!ctx.config.is_object()) throw UsageError("config " + config_path + ": top level must be an object");
    for (const auto& o : overrides) apply_override(ctx.config, o);
    if (seed) ctx.config["seed"] = *seed;
    ctx.seed = ctx.config.contains("seed") ? Field(&ctx.config["seed"], "seed").unsigned_int() : 0;
    ctx.base_dir = cfg.parent_path();
    ctx.out_dir = out_dir;
    ctx.parallelism = Parallelism{threads};
    fs::create_directories(ctx.out_dir);

    Command fn = nullptr;
    for (const auto& [name, f] : commands())
      if (name == ctx.command) fn = f;
    const int code = fn(ctx);

    RunManifest m;
    m.command = ctx.command;
    m.config_digest = hex_digest(fnv1a64(ctx.config.dump()));
    m.seed = ctx.seed;
    m.version = version_string();
    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    m.outputs = ctx.outputs;
    write_text_file(ctx.out_dir / "manifest.json", m.to_json().dump(2) + "\n");
    return code;
  } catch (const UsageError& e) {
    err << "nsde " << ctx.command << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "nsde " << ctx.command << ": " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "nsde " << ctx.command << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "nsde " << ctx.command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nsde
