#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "nsde/ingest.hpp"
#include "panel_fixture.hpp"
#include "support.hpp"

using namespace nsde;
using namespace nsde::test;

namespace {

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("well-formed 3x2 file") {
  const PanelData p = parse_panel_csv("t,a,b\n0,1.5,2\n1,2.5,3\n2,3.5,4\n");
  CHECK(p.d() == 2);
  CHECK(p.rows() == 3);
  CHECK(p.series_names == std::vector<std::string>{"a", "b"});
  CHECK(p.inferred_delta == 1.0);
  CHECK(p.values(2, 0) == 3.5);
  CHECK(p.irregular_gaps.empty());
  CHECK(p.missing_count() == 0);
}

TEST_CASE("timestamp and parse errors") {
  CHECK(code_of([] { parse_panel_csv("t,a\n0,1\n2,1\n1,1\n"); }) == ErrorCode::NonMonotoneTimestamps);
  CHECK(code_of([] { parse_panel_csv("t,a\n0,1\n0,1\n"); }) == ErrorCode::NonMonotoneTimestamps);
  try {
    parse_panel_csv("t,a,b\n0,1,2\n1,1\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK(code_of([] { parse_panel_csv("t,a\n0,abc\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_panel_csv("t,a\nyesterday,1\n"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { load_panel_csv("/nonexistent/panel.csv"); }) == ErrorCode::IoError);
}

TEST_CASE("missing markers") {
  const PanelData p = parse_panel_csv("t,a,b,c\n0,,NA,NaN\n1,1,2,3\n");
  CHECK(p.missing_count() == 3);
  const PanelData custom = parse_panel_csv("t,a\n0,-999\n1,1\n", {"-999"});
  CHECK(std::isnan(custom.values(0, 0)));
}

TEST_CASE("ISO time stamps and irregular gaps") {
  CHECK(parse_iso_timestamp("1970-01-01") == 0.0);
  CHECK(parse_iso_timestamp("2000-03-01T00:00:00") == 951868800.0);
  CHECK(parse_iso_timestamp("2011-03-02 09:35") == *parse_iso_timestamp("2011-03-02T09:30:00") + 300.0);
  CHECK(parse_iso_timestamp("2011-03-02T09:30:00.25") == *parse_iso_timestamp("2011-03-02T09:30:00") + 0.25);
  CHECK_FALSE(parse_iso_timestamp("2011-13-02"));
  CHECK_FALSE(parse_iso_timestamp("not a date"));

  const PanelData p = parse_panel_csv(
      "time,x\n2011-03-02T09:30,1\n2011-03-02T09:35,2\n2011-03-02T09:40,3\n2011-03-02T10:00,4\n2011-03-02T10:05,5\n");
  CHECK(p.inferred_delta == 300.0);
  CHECK(p.irregular_gaps == std::vector<std::size_t>{3});
  CHECK(code_of([&] { to_sample_path(p, PanelTransform::Levels); }) == ErrorCode::IrregularSpacing);
}

TEST_CASE("complete_cases") {
  const PanelData full = parse_panel_csv("t,a,b\n0,1,2\n1,3,4\n");
  const PanelData same = complete_cases(full);
  CHECK(same.series_names == full.series_names);
  CHECK(bit_equal(same.values, full.values));
  CHECK(same.dropped_columns.empty());

  const PanelData one_missing = complete_cases(parse_panel_csv("t,a,b,c\n0,NA,2,5\n1,NA,4,NA\n2,NA,1,1\n"));
  CHECK(one_missing.series_names == std::vector<std::string>{"b"});
  CHECK(one_missing.dropped_columns == std::vector<std::string>{"a", "c"});
  CHECK(one_missing.values.col(0) == Eigen::Vector3d(2, 4, 1));
  CHECK(one_missing.missing_count() == 0);

  CHECK(code_of([] { complete_cases(parse_panel_csv("t,a\n0,NA\n1,1\n")); }) == ErrorCode::EmptyPanel);
}

TEST_CASE("transforms") {
  const PanelData p = parse_panel_csv("t,a,b\n10,1,2\n20,4,8\n30,2,2\n");
  const SamplePath levels = to_sample_path(p, PanelTransform::Levels);
  CHECK(levels.delta == 1.0);
  CHECK(bit_equal(levels.data, p.values));
  CHECK(to_sample_path(p, PanelTransform::Levels, 0.25).delta == 0.25);

  const SamplePath logs = to_sample_path(p, PanelTransform::Log);
  CHECK(logs.data.rows() == 3);
  CHECK(logs.data(1, 1) == std::log(8.0));

  const SamplePath diffs = to_sample_path(p, PanelTransform::DiffLog);
  CHECK(diffs.data.rows() == 2);
  CHECK(diffs.data(0, 0) == doctest::Approx(std::log(4.0)));
  CHECK(diffs.data(1, 1) == doctest::Approx(std::log(0.25)));

  CHECK(code_of([] { to_sample_path(parse_panel_csv("t,a\n0,1\n1,0\n"), PanelTransform::Log); }) ==
        ErrorCode::DomainError);
  CHECK(code_of([] { to_sample_path(parse_panel_csv("t,a\n0,1\n1,NA\n"), PanelTransform::Levels); }) ==
        ErrorCode::InvalidArgument);
  CHECK(parse_transform("diff_log") == PanelTransform::DiffLog);
  CHECK(to_string(PanelTransform::Log) == "log");
  CHECK(code_of([] { parse_transform("sqrt"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("99 x 1597 panel round-trips bit-exactly") {
  const std::string text = synthetic_panel_csv(99, 1597, 2011);
  const PanelData p = parse_panel_csv(text);
  CHECK(p.d() == 99);
  CHECK(p.rows() == 1597);
  CHECK(p.inferred_delta == 300.0);
  CHECK(p.irregular_gaps.empty());
  CHECK(format_panel_csv(p) == text);

  const auto file = std::filesystem::temp_directory_path() / "nsde_test_panel.csv";
  save_panel_csv(p, file);
  const PanelData q = load_panel_csv(file);
  std::filesystem::remove(file);
  CHECK(q.series_names == p.series_names);
  CHECK(q.timestamps == p.timestamps);
  CHECK(bit_equal(q.values, p.values));

  const SamplePath path = to_sample_path(complete_cases(q), PanelTransform::Log);
  CHECK(path.n() == 1596);
  CHECK(path.d() == 99);
}

TEST_CASE("missing cells survive a round trip") {
  const PanelData p = parse_panel_csv("t,a,b\n0,NA,2\n1,3,\n");
  const PanelData q = parse_panel_csv(format_panel_csv(p));
  CHECK(q.missing_count() == 2);
  CHECK(format_panel_csv(q) == format_panel_csv(p));
}
