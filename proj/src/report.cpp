// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "levelsep/common.hpp"

namespace levelsep::report {

namespace {

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string fmt2(double v) { return fmt(v, "%.2f"); }

const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {"#4878a8", "#c05a46", "#6a9a58", "#8a6aa8"};
  return colors;
}

}  // namespace

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw NumericalError("box_stats: empty sample");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.n = values.size();
  b.q1 = metrics::quantile_type7(values, 0.25);
  b.median = metrics::quantile_type7(values, 0.5);
  b.q3 = metrics::quantile_type7(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.lo_whisker = b.q3;
  b.hi_whisker = b.q1;
  for (double v : values) {
    if (v >= lo_fence) {
      b.lo_whisker = v;
      break;
    }
  }
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    if (*it <= hi_fence) {
      b.hi_whisker = *it;
      break;
    }
  }
  return b;
}

std::string summary_csv(const std::vector<metrics::SummaryRow>& rows) {
  std::ostringstream out;
  out << "model,condition,class,metric,median,q1,q3,n\n";
  for (const auto& r : rows) {
    out << r.model << "," << (r.condition.empty() ? "all" : r.condition) << ","
        << (r.class_name.empty() ? "all" : r.class_name) << "," << r.metric << ","
        << fmt(r.median) << "," << fmt(r.q1) << "," << fmt(r.q3) << "," << r.n << "\n";
  }
  return out.str();
}

std::string boxplot_svg(const std::string& title, const std::string& y_label, double y_min,
                        double y_max, double tick_step,
                        const std::vector<std::string>& group_labels,
                        const std::vector<std::string>& series_labels,
                        const std::vector<std::vector<std::vector<double>>>& values) {
  if (!(y_max > y_min)) throw ConfigError("boxplot: y_max must exceed y_min");
  if (!(tick_step > 0.0)) throw ConfigError("boxplot: tick_step must be positive");
  if (values.size() != group_labels.size())
    throw ConfigError("boxplot: one value set per group required");
  for (const auto& g : values)
    if (g.size() != series_labels.size())
      throw ConfigError("boxplot: one sample per series required in every group");

  const double width = 640.0;
  const double height = 360.0;
  const double ml = 64.0, mr = 20.0, mt = 34.0, mb = 52.0;
  const double pw = width - ml - mr;
  const double ph = height - mt - mb;
  const std::size_t ngroups = group_labels.size();
  const std::size_t nseries = series_labels.size();

  auto ypix = [&](double v) {
    const double c = std::clamp(v, y_min, y_max);
    return mt + ph * (y_max - c) / (y_max - y_min);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt2(width) << "\" height=\""
    << fmt2(height) << "\" viewBox=\"0 0 " << fmt2(width) << " " << fmt2(height) << "\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << fmt2(width) << "\" height=\"" << fmt2(height)
    << "\" fill=\"#ffffff\"/>\n";
  s << "<text x=\"" << fmt2(ml + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

  // y grid and ticks
  for (double v = y_min; v <= y_max + 1e-9; v += tick_step) {
    const double y = ypix(v);
    s << "<line x1=\"" << fmt2(ml) << "\" y1=\"" << fmt2(y) << "\" x2=\"" << fmt2(ml + pw)
      << "\" y2=\"" << fmt2(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    s << "<text x=\"" << fmt2(ml - 6) << "\" y=\"" << fmt2(y + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
      << "</text>\n";
  }
  s << "<text x=\"16\" y=\"" << fmt2(mt + ph / 2)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
    << fmt2(mt + ph / 2) << ")\">" << y_label << "</text>\n";

  // frame
  s << "<rect x=\"" << fmt2(ml) << "\" y=\"" << fmt2(mt) << "\" width=\"" << fmt2(pw)
    << "\" height=\"" << fmt2(ph) << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

  const double group_w = pw / static_cast<double>(ngroups);
  const double slot_w = group_w / static_cast<double>(nseries + 1);
  const double box_w = slot_w * 0.7;

  for (std::size_t gi = 0; gi < ngroups; ++gi) {
    const double gx = ml + group_w * static_cast<double>(gi);
    s << "<text x=\"" << fmt2(gx + group_w / 2) << "\" y=\"" << fmt2(mt + ph + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << group_labels[gi] << "</text>\n";
    for (std::size_t si = 0; si < nseries; ++si) {
      if (values[gi][si].empty()) continue;
      const BoxStats b = box_stats(values[gi][si]);
      const std::string& color = palette()[si % palette().size()];
      const double cx = gx + slot_w * static_cast<double>(si + 1);
      const double x0 = cx - box_w / 2;
      const double yq1 = ypix(b.q1), yq3 = ypix(b.q3), ymed = ypix(b.median);
      const double ylo = ypix(b.lo_whisker), yhi = ypix(b.hi_whisker);
      // whiskers
      s << "<line x1=\"" << fmt2(cx) << "\" y1=\"" << fmt2(ylo) << "\" x2=\"" << fmt2(cx)
        << "\" y2=\"" << fmt2(yq1) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      s << "<line x1=\"" << fmt2(cx) << "\" y1=\"" << fmt2(yq3) << "\" x2=\"" << fmt2(cx)
        << "\" y2=\"" << fmt2(yhi) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
      s << "<line x1=\"" << fmt2(cx - box_w / 4) << "\" y1=\"" << fmt2(ylo) << "\" x2=\""
        << fmt2(cx + box_w / 4) << "\" y2=\"" << fmt2(ylo) << "\" stroke=\"" << color
        << "\" stroke-width=\"1\"/>\n";
      s << "<line x1=\"" << fmt2(cx - box_w / 4) << "\" y1=\"" << fmt2(yhi) << "\" x2=\""
        << fmt2(cx + box_w / 4) << "\" y2=\"" << fmt2(yhi) << "\" stroke=\"" << color
        << "\" stroke-width=\"1\"/>\n";
      // box and median
      s << "<rect x=\"" << fmt2(x0) << "\" y=\"" << fmt2(yq3) << "\" width=\"" << fmt2(box_w)
        << "\" height=\"" << fmt2(yq1 - yq3) << "\" fill=\"" << color
        << "\" fill-opacity=\"0.35\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
      s << "<line x1=\"" << fmt2(x0) << "\" y1=\"" << fmt2(ymed) << "\" x2=\"" << fmt2(x0 + box_w)
        << "\" y2=\"" << fmt2(ymed) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    }
  }

  // legend
  for (std::size_t si = 0; si < nseries; ++si) {
    const double lx = ml + 10;
    const double ly = mt + 10 + 18 * static_cast<double>(si);
    s << "<rect x=\"" << fmt2(lx) << "\" y=\"" << fmt2(ly) << "\" width=\"12\" height=\"12\" fill=\""
      << palette()[si % palette().size()] << "\" fill-opacity=\"0.6\"/>\n";
    s << "<text x=\"" << fmt2(lx + 18) << "\" y=\"" << fmt2(ly + 10)
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << series_labels[si] << "</text>\n";
  }

  s << "</svg>\n";
  return s.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_report(
    const std::vector<std::pair<std::string, std::vector<metrics::EvalRecord>>>& models,
    const std::filesystem::path& out_dir) {
  if (models.empty()) throw ConfigError("report: no evaluation results given");
  std::filesystem::create_directories(out_dir);

  // One row per (model, condition, class, metric); nothing pooled, so the
  // row count is the product of the present group sizes.
  std::vector<metrics::SummaryRow> rows;
  for (const auto& [label, records] : models) {
    auto per_class = metrics::summarize(records, {"condition", "class"}, label);
    rows.insert(rows.end(), per_class.begin(), per_class.end());
  }
  write_text(out_dir / "summary.csv", summary_csv(rows));

  // Boxplots pool classes per condition; conditions appear in severity order.
  const std::vector<metrics::Condition> conds = {
      metrics::Condition::None, metrics::Condition::Weak, metrics::Condition::Moderate,
      metrics::Condition::Strong};
  std::vector<std::string> group_labels;
  std::vector<metrics::Condition> used;
  for (metrics::Condition c : conds) {
    bool present = false;
    for (const auto& [label, records] : models)
      for (const auto& r : records) present = present || r.condition == c;
    if (present) {
      used.push_back(c);
      group_labels.push_back(metrics::condition_name(c));
    }
  }

  std::vector<std::string> series_labels;
  for (const auto& [label, records] : models) series_labels.push_back(label);

  auto collect = [&](double metrics::EvalRecord::*field) {
    std::vector<std::vector<std::vector<double>>> values(used.size());
    for (std::size_t gi = 0; gi < used.size(); ++gi) {
      values[gi].resize(models.size());
      for (std::size_t si = 0; si < models.size(); ++si)
        for (const auto& r : models[si].second)
          if (r.condition == used[gi]) values[gi][si].push_back(r.*field);
    }
    return values;
  };

  write_text(out_dir / "dbfs_err_boxplot.svg",
             boxplot_svg("Source level absolute error", "abs error (dB)", 0.0, 60.0, 10.0,
                         group_labels, series_labels,
                         collect(&metrics::EvalRecord::dbfs_abs_err)));
  write_text(out_dir / "si_sdri_boxplot.svg",
             boxplot_svg("SI-SDR improvement", "SI-SDRi (dB)", -10.0, 30.0, 10.0, group_labels,
                         series_labels, collect(&metrics::EvalRecord::si_sdri_db)));
}

}  // namespace levelsep::report
