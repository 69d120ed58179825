#include "nsde/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "nsde/error.hpp"

namespace nsde {

std::size_t PanelData::missing_count() const noexcept {
  return static_cast<std::size_t>(values.array().isNaN().count());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  if (line.empty()) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Days since 1970-01-01 in the proleptic Gregorian calendar (H. Hinnant's algorithm).
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::optional<double> parse_iso_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  char sep = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
  if (text.size() > 10) {
    sep = text[10];
    if (sep != 'T' && sep != ' ') return std::nullopt;
    const std::string rest = text.substr(11);
    int used = 0;
    if (std::sscanf(rest.c_str(), "%2d:%2d%n", &h, &mi, &used) != 2) return std::nullopt;
    std::string tail = rest.substr(static_cast<std::size_t>(used));
    if (!tail.empty() && tail.back() == 'Z') tail.pop_back();
    if (!tail.empty()) {
      if (tail.front() != ':') return std::nullopt;
      const auto s = parse_number(tail.substr(1));
      if (!s) return std::nullopt;
      sec = *s;
    }
    if (h > 23 || mi > 59 || sec < 0.0 || sec >= 61.0) return std::nullopt;
  }
  const long long days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec;
}

PanelData parse_panel_csv(const std::string& text, const std::vector<std::string>& markers) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  PanelData panel;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) break;
  }
  if (line_no == 0 || trim(line).empty()) throw Error(ErrorCode::ParseError, "line 1: missing header row");
  const auto header = split_line(line);
  if (header.size() < 2) throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": header needs a time column and at least one series");
  panel.time_column = trim(header[0]);
  for (std::size_t c = 1; c < header.size(); ++c) panel.series_names.push_back(trim(header[c]));
  const std::size_t d = panel.series_names.size();

  std::vector<std::vector<double>> rows;
  std::optional<bool> iso;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    const std::string where = "line " + std::to_string(line_no);
    if (cells.size() != d + 1) {
      throw Error(ErrorCode::ParseError, where + ": expected " + std::to_string(d + 1) + " fields, found " +
                                             std::to_string(cells.size()));
    }
    const std::string ts = trim(cells[0]);
    std::optional<double> t = parse_number(ts);
    bool this_iso = false;
    if (!t) {
      t = parse_iso_timestamp(ts);
      this_iso = true;
    }
    if (!t) throw Error(ErrorCode::ParseError, where + ": unreadable time stamp '" + ts + "'");
    if (iso && *iso != this_iso) throw Error(ErrorCode::ParseError, where + ": mixed numeric and date time stamps");
    iso = this_iso;
    if (!panel.timestamps.empty() && !(*t > panel.timestamps.back())) {
      throw Error(ErrorCode::NonMonotoneTimestamps, where + ": time stamp '" + ts + "' does not increase");
    }
    panel.timestamps.push_back(*t);
    panel.timestamp_text.push_back(ts);

    std::vector<double> row(d);
    for (std::size_t c = 0; c < d; ++c) {
      const std::string cell = trim(cells[c + 1]);
      if (std::find(markers.begin(), markers.end(), cell) != markers.end()) {
        row[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      const auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::ParseError, where + ", column '" + panel.series_names[c] + "': unreadable value '" +
                                               cell + "'");
      }
      row[c] = *v;
    }
    rows.push_back(std::move(row));
  }

  panel.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < d; ++c)
      panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

  if (panel.timestamps.size() >= 2) {
    std::map<double, std::size_t> counts;
    std::vector<double> steps;
    for (std::size_t k = 1; k < panel.timestamps.size(); ++k) {
      const double step = panel.timestamps[k] - panel.timestamps[k - 1];
      steps.push_back(step);
      // Bucket steps to 12 significant digits so that float noise does not split the mode.
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", step);
      ++counts[std::strtod(buf, nullptr)];
    }
    std::size_t best = 0;
    for (const auto& [step, count] : counts) {
      if (count > best) {
        best = count;
        panel.inferred_delta = step;
      }
    }
    for (std::size_t k = 0; k < steps.size(); ++k)
      if (std::abs(steps[k] - panel.inferred_delta) > 0.01 * panel.inferred_delta) panel.irregular_gaps.push_back(k + 1);
  }
  return panel;
}

PanelData load_panel_csv(const std::filesystem::path& path, const std::vector<std::string>& markers) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_panel_csv(buf.str(), markers);
}

std::string format_panel_csv(const PanelData& panel) {
  std::string out = panel.time_column;
  for (const auto& name : panel.series_names) out += "," + name;
  out += "\n";
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    out += r < panel.timestamp_text.size() ? panel.timestamp_text[r] : format_double(panel.timestamps[r]);
    for (std::size_t c = 0; c < panel.d(); ++c) {
      const double v = panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      out += ",";
      out += std::isnan(v) ? std::string("NA") : format_double(v);
    }
    out += "\n";
  }
  return out;
}

void save_panel_csv(const PanelData& panel, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << format_panel_csv(panel);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

PanelData complete_cases(const PanelData& panel) {
  std::vector<Eigen::Index> keep;
  PanelData out = panel;
  out.series_names.clear();
  out.dropped_columns = panel.dropped_columns;
  for (std::size_t c = 0; c < panel.d(); ++c) {
    if (panel.values.col(static_cast<Eigen::Index>(c)).array().isNaN().any()) {
      out.dropped_columns.push_back(panel.series_names[c]);
    } else {
      keep.push_back(static_cast<Eigen::Index>(c));
      out.series_names.push_back(panel.series_names[c]);
    }
  }
  if (keep.empty()) throw Error(ErrorCode::EmptyPanel, "every column has missing values");
  out.values.resize(panel.values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) out.values.col(static_cast<Eigen::Index>(k)) = panel.values.col(keep[k]);
  return out;
}

PanelTransform parse_transform(const std::string& name) {
  if (name == "levels") return PanelTransform::Levels;
  if (name == "log") return PanelTransform::Log;
  if (name == "diff_log") return PanelTransform::DiffLog;
  throw Error(ErrorCode::InvalidArgument, "unknown transform '" + name + "' (levels, log, diff_log)");
}

std::string to_string(PanelTransform transform) {
  switch (transform) {
    case PanelTransform::Levels: return "levels";
    case PanelTransform::Log: return "log";
    case PanelTransform::DiffLog: return "diff_log";
  }
  return "?";
}

SamplePath to_sample_path(const PanelData& panel, PanelTransform transform, std::optional<double> delta) {
  if (panel.rows() < 2) throw Error(ErrorCode::InvalidArgument, "panel needs at least two rows");
  if (panel.missing_count() > 0) throw Error(ErrorCode::InvalidArgument, "panel has missing cells; run complete_cases first");
  for (std::size_t k = 1; k < panel.rows(); ++k) {
    const double step = panel.timestamps[k] - panel.timestamps[k - 1];
    if (std::abs(step - panel.inferred_delta) > 0.01 * panel.inferred_delta) {
      throw Error(ErrorCode::IrregularSpacing, "step at row " + std::to_string(k) + " is " + format_double(step) +
                                                   ", modal step " + format_double(panel.inferred_delta));
    }
  }
  if (delta && !(*delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");

  SamplePath path;
  path.delta = delta.value_or(1.0);
  Eigen::MatrixXd x = panel.values;
  if (transform != PanelTransform::Levels) {
    if ((x.array() <= 0.0).any()) throw Error(ErrorCode::DomainError, "log of a non-positive value");
    x = x.array().log().matrix();
  }
  if (transform == PanelTransform::DiffLog) {
    if (x.rows() < 3) throw Error(ErrorCode::InvalidArgument, "diff_log needs at least three rows");
    x = (x.bottomRows(x.rows() - 1) - x.topRows(x.rows() - 1)).eval();
  }
  path.data = std::move(x);
  return path;
}

}  // namespace nsde
