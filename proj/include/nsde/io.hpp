#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsde/estimate.hpp"
#include "nsde/experiments.hpp"
#include "nsde/graph.hpp"
#include "nsde/ingest.hpp"
#include "nsde/lasso.hpp"
#include "nsde/model.hpp"
#include "nsde/simulate.hpp"

namespace nsde {

using Json = nlohmann::ordered_json;

/// "%.17g": enough digits for a bit-exact double round trip.
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Graphs. Edge list lines are "child parent"; the DOT arrows run parent -> child.
std::string format_edge_list(const DirectedGraph& g);
DirectedGraph parse_edge_list(const std::string& text);
std::string format_dot(const DirectedGraph& g, const std::vector<std::string>& labels = {});
Json graph_to_json(const DirectedGraph& g);
DirectedGraph graph_from_json(const Json& j);
/// Dispatches on the extension: .json, otherwise edge list.
DirectedGraph load_graph(const std::filesystem::path& path);

// Model configuration.
Json spec_to_json(const NsdeSpec& spec);
/// Missing keys keep their defaults; `d` comes from the caller. Throws InvalidArgument.
NsdeSpec spec_from_json(const Json& j, std::size_t d);
Json params_to_json(const ParamVector& theta, const ParamLayout& layout);

// Sample paths: header t,x0,...,x{d-1}.
std::string format_path_csv(const SamplePath& path);
/// delta is read from the first two time stamps. Throws ParseError.
SamplePath parse_path_csv(const std::string& text);
SamplePath load_path_csv(const std::filesystem::path& path);

// Estimation and lasso reports.
Json fit_to_json(const FitResult& fit);
/// lambda,coef_name,value for every grid point and penalized or not coordinate.
std::string format_lasso_path_csv(const LassoPath& path, const ParamLayout& layout);
/// Blocks "# lambda=<value>" followed by the recovered edges, one block per grid point.
std::string format_adjacency_path(const LassoPath& path);
Json selection_to_json(const LassoFit& fit, const SelectionRule& rule);

// Studies.
std::string format_study_csv(const StudyReport& report);
Json study_summary_json(const StudyReport& report);

// Run manifests.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex_digest(std::uint64_t digest);

struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string version;
  double wall_clock_seconds = 0.0;
  std::vector<std::string> outputs;

  Json to_json() const;
};

}  // namespace nsde
