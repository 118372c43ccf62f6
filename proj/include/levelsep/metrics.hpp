// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_METRICS_HPP
#define LEVELSEP_METRICS_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "levelsep/common.hpp"
#include "levelsep/dsp.hpp"
#include "levelsep/models.hpp"
#include "levelsep/scenegen.hpp"

namespace levelsep::metrics {

enum class Condition { None, Weak, Moderate, Strong };

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);

// Background LUFS to condition: absent -> none, <= -35 -> weak,
// (-35, -10] -> moderate, > -10 -> strong.
Condition condition_of(const std::optional<double>& background_lufs);

// Scale-invariant SDR in dB, clamped to [-100, +100]; +100 when the residual
// underflows (numerically perfect reconstruction).
double si_sdr(const std::vector<double>& est, const std::vector<double>& ref);

// si_sdr(est, ref) - si_sdr(mix, ref).
double si_sdr_improvement(const std::vector<double>& est, const std::vector<double>& ref,
                          const std::vector<double>& mix);

double dbfs_of(const std::vector<double>& x, int sample_rate);

// |dbfs(est) - dbfs(ref)|; the estimate may be silent (floor), the reference
// must not be.
double dbfs_abs_error(const std::vector<double>& est, const std::vector<double>& ref,
                      int sample_rate);

struct EvalRecord {
  std::string clip_id;
  std::string class_name;
  double si_sdr_db = 0.0;
  double si_sdri_db = 0.0;
  double dbfs_est = 0.0;
  double dbfs_ref = 0.0;
  double dbfs_abs_err = 0.0;
  Condition condition = Condition::None;
};

// Inactive classes are not scored against a reference level; their estimate
// level is logged for leakage analysis instead.
struct LeakageRecord {
  std::string clip_id;
  std::string class_name;
  double dbfs_est = 0.0;
  Condition condition = Condition::None;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  std::vector<LeakageRecord> leakage;
  std::vector<std::string> skipped;  // human-readable skip reasons
};

struct EvalConfig {
  dsp::StftConfig stft;
  std::vector<std::string> classes;  // class order used at training time
  bool baseline_mixture = false;     // score the mixture as every estimate
};

// For each clip and each active class: reconstruct, then compute SI-SDR,
// SI-SDR improvement and dBFS error on the STFT-interior samples.
// separator may be null only in baseline_mixture mode.
EvalResult evaluate(const scenegen::Manifest& manifest, const models::ModelState* separator,
                    const EvalConfig& cfg);

// Type-7 quantile (linear interpolation) of an unsorted sample.
double quantile_type7(std::vector<double> values, double p);

struct SummaryRow {
  std::string model;
  std::string condition;  // "" when not grouped by condition
  std::string class_name;  // "" when not grouped by class
  std::string metric;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t n = 0;
};

// Median/quartiles/count per group for metrics si_sdr, si_sdri and
// dbfs_abs_err. group_keys is any subset of {"condition", "class"}; rows are
// emitted in deterministic order.
std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records,
                                  const std::vector<std::string>& group_keys,
                                  const std::string& model_label);

// JSONL round trip for evaluation records.
void write_records(const EvalResult& result, const std::filesystem::path& path);
EvalResult read_records(const std::filesystem::path& path);

}  // namespace levelsep::metrics

#endif  // LEVELSEP_METRICS_HPP
