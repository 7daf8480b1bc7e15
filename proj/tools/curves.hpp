#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace tracer::cli {

struct CurveSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  ///< (step, value)
};

struct MergedCurves {
  std::vector<CurveSeries> series;
  /// Long format: run, step, dev_map3, dev_f2.
  std::string csv;
};

/// Reads <run>/history.csv of every run. All histories must share one
/// column layout with a dev_map3 column and at least one evaluation row;
/// otherwise ValidationError names the offending runs.
MergedCurves merge_histories(const std::vector<std::filesystem::path>& runs);

/// Line chart with one polyline per series and a legend.
std::string render_svg(const std::vector<CurveSeries>& series, const std::string& x_label,
                       const std::string& y_label, const std::string& title = {});

}  // namespace tracer::cli
