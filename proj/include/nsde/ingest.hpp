#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsde/simulate.hpp"

namespace nsde {

/// Time-indexed panel. Missing cells are NaN in `values`.
struct PanelData {
  std::string time_column = "t";
  std::vector<double> timestamps;           // seconds since epoch for ISO input
  std::vector<std::string> timestamp_text;  // as read; reused on save
  std::vector<std::string> series_names;
  Eigen::MatrixXd values;
  double inferred_delta = 0.0;  // modal timestamp difference
  /// Row indices k where t_k - t_{k-1} differs from the modal step by more than 1%.
  std::vector<std::size_t> irregular_gaps;
  std::vector<std::string> dropped_columns;

  std::size_t rows() const noexcept { return timestamps.size(); }
  std::size_t d() const noexcept { return series_names.size(); }
  std::size_t missing_count() const noexcept;
};

/// Reads a header row (time column first, then series names) followed by one row per
/// time stamp. Time stamps are numbers or ISO 8601 dates / date-times (UTC).
/// Throws ParseError (with the line number), NonMonotoneTimestamps, IoError.
PanelData load_panel_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& missing_markers = {"", "NA", "NaN"});
PanelData parse_panel_csv(const std::string& text,
                          const std::vector<std::string>& missing_markers = {"", "NA", "NaN"});

/// Writes values with 17 significant digits and missing cells as NA. Throws IoError.
void save_panel_csv(const PanelData& panel, const std::filesystem::path& path);
std::string format_panel_csv(const PanelData& panel);

/// Drops every column with at least one missing cell; names go to dropped_columns.
/// Throws EmptyPanel when nothing is left.
PanelData complete_cases(const PanelData& panel);

enum class PanelTransform { Levels, Log, DiffLog };

/// Levels and Log keep every row; DiffLog has one row fewer. The observation step is
/// `delta` (default 1 per interval, so the time unit is one sampling interval).
/// Throws IrregularSpacing (any step more than 1% off the modal one), DomainError
/// (log of a non-positive value), InvalidArgument (missing cells or fewer than 2 rows).
SamplePath to_sample_path(const PanelData& panel, PanelTransform transform, std::optional<double> delta = std::nullopt);

PanelTransform parse_transform(const std::string& name);
std::string to_string(PanelTransform transform);

/// Parses "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS[.fff]]" or with a space separator;
/// returns seconds since 1970-01-01 UTC.
std::optional<double> parse_iso_timestamp(const std::string& text);

}  // namespace nsde
