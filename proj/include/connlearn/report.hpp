/*
 * Report emission: machine-readable result tables (JSON + CSV), a markdown
 * pivot with the best method per task bolded, and static SVG figures for the
 * scaling curves. Output bytes are deterministic: sorted keys, fixed float
 * formatting, no timestamps.
 */
#pragma once

#include "connlearn/evalharness.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace connlearn::evalharness {

namespace detail {

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return std::string(buf);
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NumericError("cannot open '" + path.string() + "' for writing");
  out << content;
}

}  // namespace detail

inline nlohmann::json probe_report_to_json(const ProbeReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["method"] = r.method;
  j["mode"] = r.mode;
  j["protocol"] = r.protocol;
  j["accuracy_mean"] = r.accuracy_mean;
  j["accuracy_std"] = r.accuracy_std;
  j["per_run_accuracy"] = r.per_run_accuracy;
  j["majority_class_accuracy"] = r.majority_class_accuracy;
  j["config"] = nlohmann::json{{"mode", r.config.mode},
                               {"outer_folds", r.config.outer_folds},
                               {"inner_folds", r.config.inner_folds},
                               {"n_runs", r.config.n_runs},
                               {"probe_epochs", r.config.probe_epochs},
                               {"probe_lr_grid", r.config.probe_lr_grid},
                               {"seed", r.config.seed}};
  return j;
}

inline ProbeReport probe_report_from_json(const nlohmann::json& j) {
  ProbeReport r;
  r.task = j.at("task").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.protocol = j.at("protocol").get<std::string>();
  r.accuracy_mean = j.at("accuracy_mean").get<double>();
  r.accuracy_std = j.at("accuracy_std").get<double>();
  r.per_run_accuracy = j.at("per_run_accuracy").get<std::vector<double>>();
  r.majority_class_accuracy = j.at("majority_class_accuracy").get<double>();
  const auto& c = j.at("config");
  r.config.mode = c.at("mode").get<std::string>();
  r.config.outer_folds = c.at("outer_folds").get<int>();
  r.config.inner_folds = c.at("inner_folds").get<int>();
  r.config.n_runs = c.at("n_runs").get<int>();
  r.config.probe_epochs = c.at("probe_epochs").get<int>();
  r.config.probe_lr_grid = c.at("probe_lr_grid").get<std::vector<double>>();
  r.config.seed = c.at("seed").get<std::uint64_t>();
  return r;
}

// Rows = method (mode/protocol), columns = tasks, best mean per task bolded
// in the markdown rendering.
inline void render_report(const std::vector<ProbeReport>& reports, const std::filesystem::path& dir) {
  if (reports.empty()) throw InvalidInput("render_report: no reports");

  nlohmann::json arr = nlohmann::json::array();
  for (const ProbeReport& r : reports) arr.push_back(probe_report_to_json(r));
  detail::write_file(dir / "report.json", arr.dump(2) + "\n");

  std::set<std::string> tasks;
  std::set<std::string> rows;
  std::map<std::pair<std::string, std::string>, const ProbeReport*> cells;
  bool majority_row_available = false;
  std::map<std::string, double> majority;
  for (const ProbeReport& r : reports) {
    const std::string row = r.method + " (" + r.mode + ", " + r.protocol + ")";
    tasks.insert(r.task);
    rows.insert(row);
    cells[{row, r.task}] = &r;
    majority[r.task] = r.majority_class_accuracy;
    majority_row_available = true;
  }

  std::map<std::string, double> best_mean;
  for (const auto& [key, r] : cells) {
    auto it = best_mean.find(key.second);
    if (it == best_mean.end() || r->accuracy_mean > it->second) best_mean[key.second] = r->accuracy_mean;
  }

  std::string csv = "method";
  for (const std::string& t : tasks) csv += "," + t + "_mean," + t + "_std";
  csv += "\n";
  std::string md = "| Model |";
  std::string sep = "| --- |";
  for (const std::string& t : tasks) {
    md += " " + t + " |";
    sep += " --- |";
  }
  md += "\n" + sep + "\n";
  if (majority_row_available) {
    md += "| Majority class |";
    csv += "majority_class";
    for (const std::string& t : tasks) {
      md += " " + detail::fmt(majority.at(t), "%.1f") + " ± 0.0 |";
      csv += "," + detail::fmt(majority.at(t)) + ",0.00";
    }
    md += "\n";
    csv += "\n";
  }
  for (const std::string& row : rows) {
    md += "| " + row + " |";
    csv += row;
    for (const std::string& t : tasks) {
      const auto it = cells.find({row, t});
      if (it == cells.end()) {
        md += " - |";
        csv += ",,";
        continue;
      }
      const ProbeReport& r = *it->second;
      const std::string text = detail::fmt(r.accuracy_mean, "%.1f") + " ± " + detail::fmt(r.accuracy_std, "%.1f");
      const bool best = r.accuracy_mean >= best_mean.at(t) - 1e-12;
      md += best ? " **" + text + "** |" : " " + text + " |";
      csv += "," + detail::fmt(r.accuracy_mean) + "," + detail::fmt(r.accuracy_std);
    }
    md += "\n";
    csv += "\n";
  }
  detail::write_file(dir / "report.csv", csv);
  detail::write_file(dir / "report.md", md);
}

// ---- scaling curve --------------------------------------------------------------

inline nlohmann::json scaling_report_to_json(const ScalingReport& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ScalingPoint& p : s.points) {
    nlohmann::json jp;
    jp["pool_name"] = p.pool_name;
    jp["pool_size"] = p.pool_size;
    nlohmann::json rs = nlohmann::json::array();
    for (const ProbeReport& r : p.reports) rs.push_back(probe_report_to_json(r));
    jp["reports"] = std::move(rs);
    arr.push_back(std::move(jp));
  }
  return arr;
}

// Accuracy vs pretraining-pool size, one polyline per downstream task.
inline std::string scaling_figure_svg(const ScalingReport& s) {
  const int width = 640, height = 420;
  const int ml = 70, mr = 30, mt = 40, mb = 60;
  const double plot_w = width - ml - mr, plot_h = height - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  std::set<std::string> task_names;
  for (const ScalingPoint& p : s.points) {
    xmin = std::min(xmin, static_cast<double>(p.pool_size));
    xmax = std::max(xmax, static_cast<double>(p.pool_size));
    for (const ProbeReport& r : p.reports) {
      task_names.insert(r.task);
      ymin = std::min(ymin, r.accuracy_mean - r.accuracy_std);
      ymax = std::max(ymax, r.accuracy_mean + r.accuracy_std);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  const double pad = std::max(1.0, 0.1 * (ymax - ymin));
  ymin -= pad;
  ymax += pad;

  auto px = [&](double x) { return ml + plot_w * (x - xmin) / (xmax - xmin); };
  auto py = [&](double y) { return mt + plot_h * (1.0 - (y - ymin) / (ymax - ymin)); };

  const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(width / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">Frozen-probe accuracy vs pretraining pool size</text>\n";
  // axes
  svg += "<line x1=\"" + detail::fmt(static_cast<double>(ml)) + "\" y1=\"" + detail::fmt(mt + plot_h) +
         "\" x2=\"" + detail::fmt(ml + plot_w) + "\" y2=\"" + detail::fmt(mt + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::fmt(static_cast<double>(ml)) + "\" y1=\"" + detail::fmt(static_cast<double>(mt)) +
         "\" x2=\"" + detail::fmt(static_cast<double>(ml)) + "\" y2=\"" + detail::fmt(mt + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + std::to_string(width / 2) + "\" y=\"" + std::to_string(height - 14) +
         "\" text-anchor=\"middle\" font-size=\"12\">pretraining subjects</text>\n";
  svg += "<text x=\"18\" y=\"" + std::to_string(height / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 18 " + std::to_string(height / 2) +
         ")\">accuracy (%)</text>\n";
  // y ticks
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    svg += "<line x1=\"" + detail::fmt(ml - 4.0) + "\" y1=\"" + detail::fmt(py(y)) + "\" x2=\"" +
           detail::fmt(static_cast<double>(ml)) + "\" y2=\"" + detail::fmt(py(y)) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt(ml - 8.0) + "\" y=\"" + detail::fmt(py(y) + 4.0) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::fmt(y, "%.1f") + "</text>\n";
  }
  int color_idx = 0;
  int legend_y = mt + 4;
  for (const std::string& task : task_names) {
    const std::string color = palette[static_cast<std::size_t>(color_idx) % palette.size()];
    std::string points;
    for (const ScalingPoint& p : s.points) {
      for (const ProbeReport& r : p.reports) {
        if (r.task != task) continue;
        const double x = px(static_cast<double>(p.pool_size));
        const double y = py(r.accuracy_mean);
        points += detail::fmt(x) + "," + detail::fmt(y) + " ";
        // error bar: +/- std
        svg += "<line x1=\"" + detail::fmt(x) + "\" y1=\"" + detail::fmt(py(r.accuracy_mean - r.accuracy_std)) +
               "\" x2=\"" + detail::fmt(x) + "\" y2=\"" + detail::fmt(py(r.accuracy_mean + r.accuracy_std)) +
               "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
        svg += "<circle cx=\"" + detail::fmt(x) + "\" cy=\"" + detail::fmt(y) + "\" r=\"3\" fill=\"" + color +
               "\"/>\n";
        // x tick label at each pool
        svg += "<text x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(mt + plot_h + 16.0) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + std::to_string(p.pool_size) + "</text>\n";
      }
    }
    svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    svg += "<rect x=\"" + detail::fmt(ml + plot_w - 150.0) + "\" y=\"" + std::to_string(legend_y) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    svg += "<text x=\"" + detail::fmt(ml + plot_w - 135.0) + "\" y=\"" + std::to_string(legend_y + 9) +
           "\" font-size=\"11\">" + task + "</text>\n";
    legend_y += 16;
    ++color_idx;
  }
  svg += "</svg>\n";
  return svg;
}

inline void render_scaling(const ScalingReport& s, const std::filesystem::path& dir) {
  if (s.points.empty()) throw InvalidInput("render_scaling: empty report");
  detail::write_file(dir / "scaling.json", scaling_report_to_json(s).dump(2) + "\n");
  std::string csv = "pool_name,pool_size,task,method,accuracy_mean,accuracy_std\n";
  for (const ScalingPoint& p : s.points)
    for (const ProbeReport& r : p.reports)
      csv += p.pool_name + "," + std::to_string(p.pool_size) + "," + r.task + "," + r.method + "," +
             detail::fmt(r.accuracy_mean) + "," + detail::fmt(r.accuracy_std) + "\n";
  detail::write_file(dir / "scaling.csv", csv);
  detail::write_file(dir / "scaling.svg", scaling_figure_svg(s));
}

}  // namespace connlearn::evalharness
