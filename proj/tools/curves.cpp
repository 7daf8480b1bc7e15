#include "curves.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tracer/error.hpp"

namespace tracer::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string run_name(const fs::path& run) {
  auto p = run.lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

MergedCurves merge_histories(const std::vector<fs::path>& runs) {
  if (runs.empty()) throw ValidationError("report needs at least one run directory");
  struct Loaded {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
  };
  std::vector<Loaded> loaded;
  std::vector<std::string> missing;
  for (const auto& run : runs) {
    const auto file = run / "history.csv";
    std::ifstream in(file);
    if (!in) {
      missing.push_back(run.string());
      continue;
    }
    Loaded l{run_name(run), {}, {}};
    std::string line;
    if (std::getline(in, line)) l.header = split_csv_line(line);
    while (std::getline(in, line)) {
      if (!line.empty()) l.rows.push_back(split_csv_line(line));
    }
    loaded.push_back(std::move(l));
  }
  if (!missing.empty()) throw ValidationError("runs without history.csv: " + join_names(missing));

  std::vector<std::string> mismatched;
  for (const auto& l : loaded) {
    if (l.header != loaded.front().header) mismatched.push_back(l.name);
  }
  if (!mismatched.empty()) {
    throw ValidationError("history columns differ from " + loaded.front().name + " in: " + join_names(mismatched));
  }
  const auto& header = loaded.front().header;
  const auto col = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto step_col = col("step"), map_col = col("dev_map3"), f2_col = col("dev_f2");
  if (step_col < 0 || map_col < 0) {
    std::vector<std::string> names;
    for (const auto& l : loaded) names.push_back(l.name);
    throw ValidationError("histories lack step/dev_map3 columns: " + join_names(names));
  }

  MergedCurves out;
  out.csv = "run,step,dev_map3,dev_f2\n";
  std::vector<std::string> empty;
  for (const auto& l : loaded) {
    CurveSeries s{l.name, {}};
    for (const auto& row : l.rows) {
      if (static_cast<std::size_t>(map_col) >= row.size() || row[map_col].empty()) continue;
      const auto& step = row.at(step_col);
      const std::string f2 = f2_col >= 0 && static_cast<std::size_t>(f2_col) < row.size() ? row[f2_col] : "";
      s.points.emplace_back(std::stod(step), std::stod(row[map_col]));
      out.csv += l.name + "," + step + "," + row[map_col] + "," + f2 + "\n";
    }
    if (s.points.empty()) empty.push_back(l.name);
    out.series.push_back(std::move(s));
  }
  if (!empty.empty()) throw ValidationError("runs with no evaluation in their history: " + join_names(empty));
  return out;
}

std::string render_svg(const std::vector<CurveSeries>& series, const std::string& x_label,
                       const std::string& y_label, const std::string& title) {
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double width = 760, height = 440, left = 70, right = 190, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  double x_max = 1, y_min = 0, y_max = 1;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  const auto sx = [&](double x) { return left + pw * x / x_max; };
  const auto sy = [&](double y) { return top + ph * (1.0 - (y - y_min) / (y_max - y_min)); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height);
  if (!title.empty()) {
    svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       left + pw / 2, xml_escape(title));
  }
  svg += fmt::format("<g stroke=\"black\"><line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\"/>"
                     "<line x1=\"{0}\" y1=\"{3}\" x2=\"{0}\" y2=\"{1}\"/></g>\n",
                     left, top + ph, left + pw, top);
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_max * i / 5.0, yv = y_min + (y_max - y_min) * i / 5.0;
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1}\" x2=\"{0:.1f}\" y2=\"{2}\" stroke=\"black\"/>"
                       "<text x=\"{0:.1f}\" y=\"{3}\" text-anchor=\"middle\">{4:g}</text>\n",
                       sx(xv), top + ph, top + ph + 5, top + ph + 20, std::round(xv));
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1:.1f}\" x2=\"{2}\" y2=\"{1:.1f}\" stroke=\"#ddd\"/>"
                       "<text x=\"{3}\" y=\"{4:.1f}\" text-anchor=\"end\">{5:.2f}</text>\n",
                       left, sy(yv), left + pw, left - 6, sy(yv) + 4, yv);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + pw / 2, height - 15,
                     xml_escape(x_label));
  svg += fmt::format("<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
                     top + ph / 2, xml_escape(y_label));
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kColors[i % std::size(kColors)];
    std::string pts;
    for (const auto& [x, y] : series[i].points) pts += fmt::format("{:.1f},{:.1f} ", sx(x), sy(y));
    if (!pts.empty()) pts.pop_back();
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, pts);
    const double ly = top + 10 + 18.0 * i;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"3\"/>"
                       "<text x=\"{4}\" y=\"{5}\">{6}</text>\n",
                       left + pw + 15, ly, left + pw + 35, color, left + pw + 40, ly + 4,
                       xml_escape(series[i].name));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace tracer::cli
