#include "nsde/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nsde/error.hpp"

namespace nsde {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": not a number '" + s + "'");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_edge_list(const DirectedGraph& g) {
  std::string out = "# d=" + std::to_string(g.d()) + "\n";
  for (const auto& e : g.edges()) out += std::to_string(e.child) + " " + std::to_string(e.parent) + "\n";
  return out;
}

DirectedGraph parse_edge_list(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> d;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      unsigned long long v = 0;
      if (std::sscanf(line.c_str(), "# d=%llu", &v) == 1) d = static_cast<std::size_t>(v);
      continue;
    }
    std::istringstream fields(line);
    long long i = -1, j = -1;
    std::string extra;
    if (!(fields >> i >> j) || (fields >> extra) || i < 0 || j < 0) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 'child parent'");
    }
    edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
  }
  if (!d) throw Error(ErrorCode::ParseError, "missing '# d=<int>' header");
  return DirectedGraph(*d, std::move(edges));
}

std::string format_dot(const DirectedGraph& g, const std::vector<std::string>& labels) {
  std::string out = "digraph nsde {\n";
  for (std::size_t v = 0; v < g.d(); ++v) {
    out += "  " + std::to_string(v);
    if (v < labels.size()) out += " [label=\"" + labels[v] + "\"]";
    out += ";\n";
  }
  for (const auto& e : g.edges()) out += "  " + std::to_string(e.parent) + " -> " + std::to_string(e.child) + ";\n";
  out += "}\n";
  return out;
}

Json graph_to_json(const DirectedGraph& g) {
  Json edges = Json::array();
  for (const auto& e : g.edges()) edges.push_back({e.child, e.parent});
  return Json{{"d", g.d()}, {"edges", edges}};
}

DirectedGraph graph_from_json(const Json& j) {
  try {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw Error(ErrorCode::ParseError, "edges must be [child, parent] pairs");
      edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    return DirectedGraph(j.at("d").get<std::size_t>(), std::move(edges));
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::ParseError, std::string("graph json: ") + ex.what());
  }
}

DirectedGraph load_graph(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  if (path.extension() == ".json") {
    try {
      return graph_from_json(Json::parse(text));
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + ex.what());
    }
  }
  return parse_edge_list(text);
}

// ---------------------------------------------------------------------------

Json spec_to_json(const NsdeSpec& spec) {
  Json j;
  if (const auto* radial = std::get_if<RadialDictionary>(&spec.drift)) {
    j["drift"] = {{"family", "radial"}, {"scales", radial->scales}, {"exponents", radial->exponents}};
  } else {
    j["drift"] = {{"family", "linear"}};
  }
  if (const auto* tanh = std::get_if<TanhClipped>(&spec.diffusion)) {
    j["diffusion"] = {{"family", "tanh_clipped"}, {"c", tanh->c}};
  } else {
    j["diffusion"] = {{"family", "constant"}};
  }
  j["intercepts"] = spec.has_intercepts();
  j["bounds"] = {{"lower", spec.bounds.lower},
                 {"upper", spec.bounds.upper},
                 {"alpha_lower", spec.bounds.alpha_lower},
                 {"alpha_upper", spec.bounds.alpha_upper}};
  return j;
}

NsdeSpec spec_from_json(const Json& j, std::size_t d) {
  NsdeSpec spec;
  spec.d = d;
  const bool intercepts = j.value("intercepts", false);
  try {
    const std::string drift = j.contains("drift") ? j["drift"].value("family", "linear") : "linear";
    if (drift == "linear") {
      spec.drift = LinearDrift{intercepts};
    } else if (drift == "radial") {
      if (intercepts) throw Error(ErrorCode::InvalidArgument, "intercepts: only the linear drift has intercepts");
      spec.drift = RadialDictionary{j["drift"].at("scales").get<std::vector<double>>(),
                                    j["drift"].at("exponents").get<std::vector<double>>()};
    } else {
      throw Error(ErrorCode::InvalidArgument, "drift.family: unknown family '" + drift + "' (linear, radial)");
    }
    const std::string diffusion = j.contains("diffusion") ? j["diffusion"].value("family", "constant") : "constant";
    if (diffusion == "constant") {
      spec.diffusion = ConstantDiagonal{};
    } else if (diffusion == "tanh_clipped") {
      spec.diffusion = TanhClipped{j["diffusion"].value("c", 100.0)};
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "diffusion.family: unknown family '" + diffusion + "' (constant, tanh_clipped)");
    }
    if (j.contains("bounds")) {
      const auto& b = j["bounds"];
      spec.bounds.lower = b.value("lower", spec.bounds.lower);
      spec.bounds.upper = b.value("upper", spec.bounds.upper);
      spec.bounds.alpha_lower = b.value("alpha_lower", spec.bounds.alpha_lower);
      spec.bounds.alpha_upper = b.value("alpha_upper", spec.bounds.alpha_upper);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidArgument, std::string("model: ") + ex.what());
  }
  spec.validate();
  return spec;
}

Json params_to_json(const ParamVector& theta, const ParamLayout& layout) {
  const Eigen::VectorXd flat = theta.flatten();
  Json j = Json::object();
  for (std::size_t k = 0; k < layout.pi_total(); ++k) j[layout.name(k)] = flat(static_cast<Eigen::Index>(k));
  return j;
}

// ---------------------------------------------------------------------------

std::string format_path_csv(const SamplePath& path) {
  std::string out = "t";
  for (std::size_t c = 0; c < path.d(); ++c) out += ",x" + std::to_string(c);
  out += "\n";
  for (Eigen::Index r = 0; r < path.data.rows(); ++r) {
    out += format_double(path.delta * static_cast<double>(r));
    for (Eigen::Index c = 0; c < path.data.cols(); ++c) out += "," + format_double(path.data(r, c));
    out += "\n";
  }
  return out;
}

SamplePath parse_path_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (width == 0) {
      if (cells.size() < 2 || cells[0] != "t") throw Error(ErrorCode::ParseError, "line 1: expected header t,x0,...");
      width = cells.size();
      continue;
    }
    if (cells.size() != width) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                             " fields");
    }
    times.push_back(parse_double(cells[0], line_no));
    std::vector<double> row;
    for (std::size_t c = 1; c < width; ++c) row.push_back(parse_double(cells[c], line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::ParseError, "path file has no rows");
  SamplePath path;
  path.delta = rows.size() >= 2 ? times[1] - times[0] : 0.0;
  path.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c + 1 < width; ++c)
      path.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return path;
}

SamplePath load_path_csv(const std::filesystem::path& path) { return parse_path_csv(read_text_file(path)); }

// ---------------------------------------------------------------------------

Json fit_to_json(const FitResult& fit) {
  const Eigen::VectorXd flat = fit.theta_hat.flatten();
  const Eigen::VectorXd se = fit.standard_errors();
  Json params = Json::array();
  for (std::size_t k = 0; k < fit.names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    Json p = {{"name", fit.names[k]}, {"value", flat(kk)}};
    p["se"] = std::isfinite(se(kk)) ? Json(se(kk)) : Json(nullptr);
    params.push_back(p);
  }
  return Json{{"n", fit.n},
              {"delta", fit.delta},
              {"contrast", fit.contrast_value},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"parameters", params},
              {"warnings", fit.warnings}};
}

std::string format_lasso_path_csv(const LassoPath& path, const ParamLayout& layout) {
  std::string out = "lambda,coef_name,value\n";
  for (std::size_t g = 0; g < path.lambdas.size(); ++g) {
    const Eigen::VectorXd flat = path.coefficients[g].flatten();
    const std::string lambda = format_double(path.lambdas[g]);
    for (std::size_t k = 0; k < layout.pi_total(); ++k)
      out += lambda + "," + layout.name(k) + "," + format_double(flat(static_cast<Eigen::Index>(k))) + "\n";
  }
  return out;
}

std::string format_adjacency_path(const LassoPath& path) {
  std::string out;
  for (std::size_t g = 0; g < path.lambdas.size(); ++g) {
    out += "# lambda=" + format_double(path.lambdas[g]) + "\n";
    out += format_edge_list(DirectedGraph::from_adjacency(path.adjacency[g]));
  }
  return out;
}

Json selection_to_json(const LassoFit& fit, const SelectionRule& rule) {
  const auto n_edges = static_cast<std::size_t>(fit.adjacency.sum());
  Json j{{"lambda_max", fit.path.lambda_max},
         {"lambda_selected", fit.lambda_selected},
         {"rule", to_string(rule)},
         {"n_edges", n_edges}};
  if (!fit.warnings.empty()) j["warnings"] = fit.warnings;
  return j;
}

// ---------------------------------------------------------------------------

std::string format_study_csv(const StudyReport& report) {
  std::string out =
      "replication,seed,edges,squared_error,per_coordinate_error,exact_recovery,true_positives,false_positives,"
      "false_negatives,false_reverse,precision,recall,communities,agreement,lambda_max,lambda_selected,"
      "alpha_max_error,beta_mean_error,margin_singular,margin_rowsum,converged\n";
  for (const auto& r : report.replications) {
    out += std::to_string(r.index) + "," + std::to_string(r.seed) + "," + std::to_string(r.edges) + "," +
           format_double(r.squared_error) + "," + format_double(r.per_coordinate_error) + "," +
           (r.exact_recovery ? "1" : "0") + "," + std::to_string(r.true_positives) + "," +
           std::to_string(r.false_positives) + "," + std::to_string(r.false_negatives) + "," +
           std::to_string(r.false_reverse) + "," + format_double(r.precision) + "," + format_double(r.recall) + "," +
           std::to_string(r.communities) + "," + format_double(r.agreement) + "," + format_double(r.lambda_max) +
           "," + format_double(r.lambda_selected) + "," + format_double(r.alpha_max_error) + "," +
           format_double(r.beta_mean_error) + "," + format_double(r.margin_singular) + "," +
           format_double(r.margin_rowsum) + "," + (r.converged ? "1" : "0") + "\n";
  }
  return out;
}

Json study_summary_json(const StudyReport& report) {
  Json j{{"name", report.name},
         {"study", to_string(report.kind)},
         {"d", report.d},
         {"E", report.edges},
         {"pi", report.pi},
         {"T", report.horizon},
         {"delta", report.delta},
         {"n", report.n},
         {"K", report.K},
         {"epsilon", report.epsilon},
         {"bound", report.bound},
         {"mean", report.mean_per_coordinate},
         {"sd", report.sd_per_coordinate},
         {"mean_squared_error", report.mean_error},
         {"sd_squared_error", report.sd_error},
         {"replications", report.replications.size()}};
  if (report.kind != StudyKind::ErrorBound) {
    j["recovery_rate"] = report.recovery_rate;
    j["mean_precision"] = report.mean_precision;
    j["mean_recall"] = report.mean_recall;
    j["reverse_free_rate"] = report.reverse_free_rate;
    j["community_success_rate"] = report.community_success_rate;
    j["mean_agreement"] = report.mean_agreement;
  }
  j["notes"] = report.notes;
  return j;
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

Json RunManifest::to_json() const {
  return Json{{"command", command},
              {"config_digest", config_digest},
              {"seed", seed},
              {"version", version},
              {"wall_clock_seconds", wall_clock_seconds},
              {"outputs", outputs}};
}

}  // namespace nsde
