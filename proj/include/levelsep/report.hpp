// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_REPORT_HPP
#define LEVELSEP_REPORT_HPP

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "levelsep/metrics.hpp"

namespace levelsep::report {

// Tukey box summary: whiskers reach the most extreme sample within 1.5 IQR
// of the quartiles; outliers beyond that are not drawn.
struct BoxStats {
  double lo_whisker = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double hi_whisker = 0.0;
  std::size_t n = 0;
};

BoxStats box_stats(std::vector<double> values);

// CSV with header model,condition,class,metric,median,q1,q3,n; an empty
// class/condition group key is written as "all".
std::string summary_csv(const std::vector<metrics::SummaryRow>& rows);

// Grouped boxplots, one box per (group, series), fixed y axis so plots stay
// comparable across runs. values[group][series] holds the raw samples; an
// empty sample draws no box. Output is fully deterministic.
std::string boxplot_svg(const std::string& title, const std::string& y_label, double y_min,
                        double y_max, double tick_step,
                        const std::vector<std::string>& group_labels,
                        const std::vector<std::string>& series_labels,
                        const std::vector<std::vector<std::vector<double>>>& values);

// Writes summary.csv, dbfs_err_boxplot.svg (axis 0..60 dB) and
// si_sdri_boxplot.svg (axis -10..30 dB) comparing the given models, with
// boxes grouped by background condition.
void write_report(
    const std::vector<std::pair<std::string, std::vector<metrics::EvalRecord>>>& models,
    const std::filesystem::path& out_dir);

}  // namespace levelsep::report

#endif  // LEVELSEP_REPORT_HPP
