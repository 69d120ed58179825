#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "nsde/cli.hpp"
#include "nsde/io.hpp"
#include "panel_fixture.hpp"
#include "support.hpp"

using namespace nsde;
using namespace nsde::test;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("nsde_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  fs::path write(const std::string& file, const std::string& text) const {
    write_text_file(root / file, text);
    return root / file;
  }
  std::string read(const std::string& file) const { return read_text_file(root / file); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST_CASE("edge list and JSON graph round trips") {
  const auto g = generate(ErdosRenyi{0.3}, 7, 5);
  const std::string text = format_edge_list(g);
  CHECK(text.rfind("# d=7\n", 0) == 0);
  CHECK(parse_edge_list(text).adjacency() == g.adjacency());
  CHECK(graph_from_json(graph_to_json(g)).adjacency() == g.adjacency());
  CHECK(code_of([] { parse_edge_list("# d=3\n0 x\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_edge_list("# d=3\n1 1\n"); }) == ErrorCode::SelfLoop);

  const std::string dot = format_dot(build_graph(2, {{0, 1}}));
  CHECK(dot.find("1 -> 0") != std::string::npos);
}

TEST_CASE("path and spec round trips") {
  const Instance in = simulate_instance(DirectedGraph::complete(3), 7.0, 2.0, 2.0, 1.0, 9);
  const SamplePath back = parse_path_csv(format_path_csv(in.path));
  CHECK(back.delta == doctest::Approx(in.path.delta).epsilon(1e-12));
  CHECK(back.data == in.path.data);

  NsdeSpec spec = linear_spec(3, ConstantDiagonal{});
  spec.drift = RadialDictionary{{1.0, 2.0}, {0.5, 1.0}};
  const NsdeSpec again = spec_from_json(spec_to_json(spec), 3);
  CHECK(spec_to_json(again).dump() == spec_to_json(spec).dump());
  CHECK_THROWS_AS(spec_from_json(Json::parse(R"({"diffusion": {"family": "cubic"}})"), 3), Error);
}

TEST_CASE("digest and overrides") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex_digest(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");

  Json c = Json::parse(R"({"grid": {"count": 50}})");
  apply_override(c, "grid.count=10");
  apply_override(c, "rule=min");
  apply_override(c, "validation.folds=3");
  CHECK(c["grid"]["count"] == 10);
  CHECK(c["rule"] == "min");
  CHECK(c["validation"]["folds"] == 3);
  CHECK_THROWS_AS(apply_override(c, "novalue"), UsageError);
}

TEST_CASE("exit codes") {
  Workspace w("codes");
  CHECK(run({"--version"}).out.find(version_string()) != std::string::npos);
  CHECK(run({"simulate", (w.root / "missing.json").string()}).code == 2);
  CHECK(run({"frobnicate", "x.json"}).code == 2);
  w.write("graph.edges", "# d=2\n0 1\n");
  w.write("bad_delta.json", R"({"graph": "graph.edges", "delta": -1})");
  CHECK(run({"simulate", (w.root / "bad_delta.json").string(), "--out-dir", (w.root / "o").string()}).code == 2);
  w.write("neg_alpha.json", R"({"graph": "graph.edges", "params": {"alpha": -1}, "n": 10})");
  const Run neg = run({"simulate", (w.root / "neg_alpha.json").string(), "--out-dir", (w.root / "o").string()});
  CHECK(neg.code == 1);
  CHECK(neg.err.find("NegativeAlpha") != std::string::npos);
}

TEST_CASE("graph-gen, simulate, fit, lasso and communities") {
  Workspace w("pipeline");
  const std::string root = w.root.string();
  w.write("gg.json", R"({"graph": {"d": 6, "recipe": {"type": "er", "p": 0.3}, "seed": 3}, "mu": 7, "beta": 2})");
  REQUIRE(run({"graph-gen", root + "/gg.json", "--out-dir", root + "/g"}).code == 0);
  const DirectedGraph g = load_graph(w.root / "g/graph.edges");
  CHECK(load_graph(w.root / "g/graph.json").adjacency() == g.adjacency());
  const Json summary = Json::parse(w.read("g/graph_summary.json"));
  CHECK(summary["edges"] == g.edge_count());

  w.write("sim.json", R"({"graph": "g/graph.edges", "params": {"alpha": 2, "mu": 7, "beta": 2},
                          "delta": 0.01, "horizon": 20, "burn_in": 500})");
  REQUIRE(run({"run", "simulate", root + "/sim.json", "--seed", "4", "--out-dir", root + "/s"}).code == 0);
  REQUIRE(run({"simulate", root + "/sim.json", "--seed", "4", "--threads", "4", "--out-dir", root + "/s2"}).code == 0);
  CHECK(w.read("s/path.csv") == w.read("s2/path.csv"));
  const Json manifest = Json::parse(w.read("s/manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["seed"] == 4);
  CHECK(manifest["version"] == version_string());
  CHECK(manifest["config_digest"].get<std::string>().size() == 16);
  CHECK(load_path_csv(w.root / "s/path.csv").n() == 2000);

  w.write("fit.json", R"({"graph": "g/graph.edges", "path": "s/path.csv"})");
  REQUIRE(run({"fit", root + "/fit.json", "--out-dir", root + "/f"}).code == 0);
  const Json fit = Json::parse(w.read("f/fit.json"));
  CHECK(fit["converged"] == true);
  CHECK(fit["parameters"][0]["value"].get<double>() == doctest::Approx(2.0).epsilon(0.1));

  w.write("lasso.json", R"({"path": "s/path.csv", "rule": "fixed_fraction", "fraction": 0.1,
                            "grid": {"count": 20}, "restarts": 1})");
  REQUIRE(run({"lasso", root + "/lasso.json", "--out-dir", root + "/l"}).code == 0);
  for (const char* f : {"lasso_path.csv", "adjacency_path.txt", "graph.edges", "selection.json", "refit.json"})
    CHECK(fs::exists(w.root / "l" / f));
  const Json sel = Json::parse(w.read("l/selection.json"));
  CHECK(sel["lambda_selected"].get<double>() == doctest::Approx(0.1 * sel["lambda_max"].get<double>()));

  w.write("com.json", R"({"graph": {"d": 21, "recipe": {"type": "sbm", "blocks": [4, 11, 6], "p_in": 0.9,
                          "p_ex": 0.05}, "seed": 1}})");
  REQUIRE(run({"communities", root + "/com.json", "--out-dir", root + "/c"}).code == 0);
  const Json com = Json::parse(w.read("c/communities.json"));
  CHECK(com["communities"] == 3);
  CHECK(com["agreement"].get<double>() == 1.0);
}

TEST_CASE("ingest and bench") {
  Workspace w("ingest");
  const std::string root = w.root.string();
  w.write("panel.csv", synthetic_panel_csv(5, 40, 1));
  w.write("ingest.json", R"({"input": "panel.csv", "transform": "log"})");
  REQUIRE(run({"ingest", root + "/ingest.json", "--out-dir", root + "/i"}).code == 0);
  const SamplePath p = load_path_csv(w.root / "i/path.csv");
  CHECK(p.d() == 5);
  CHECK(p.n() == 39);
  CHECK(Json::parse(w.read("i/ingest_report.json"))["inferred_delta"] == 300.0);

  w.write("bench.json", R"({"study": "error_table", "replications": 3, "horizons": [10, 20]})");
  REQUIRE(run({"bench", root + "/bench.json", "--out-dir", root + "/b", "--set", "replications=2"}).code == 0);
  const std::string csv = w.read("b/summary.csv");
  CHECK(csv.rfind("d,E,pi,T,K,epsilon,bound,mean,sd", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(fs::exists(w.root / "b/study_T10.csv"));
  CHECK(fs::exists(w.root / "b/study_T20.csv"));
}
