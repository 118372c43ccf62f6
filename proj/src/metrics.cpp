// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "levelsep/wav.hpp"

namespace levelsep::metrics {

namespace {

constexpr double kSdrCapDb = 100.0;
constexpr double kSilenceDbfs = -120.0;

std::vector<double> slice(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  if (hi > x.size() || lo > hi) throw NumericalError("slice: range outside signal");
  return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(lo),
                             x.begin() + static_cast<std::ptrdiff_t>(hi));
}

}  // namespace

std::string condition_name(Condition c) {
  switch (c) {
    case Condition::None: return "none";
    case Condition::Weak: return "weak";
    case Condition::Moderate: return "moderate";
    case Condition::Strong: return "strong";
  }
  throw ConfigError("condition_name: unknown condition");
}

Condition condition_from_name(const std::string& name) {
  if (name == "none") return Condition::None;
  if (name == "weak") return Condition::Weak;
  if (name == "moderate") return Condition::Moderate;
  if (name == "strong") return Condition::Strong;
  throw ConfigError("unknown condition name: " + name);
}

Condition condition_of(const std::optional<double>& background_lufs) {
  if (!background_lufs.has_value()) return Condition::None;
  const double l = *background_lufs;
  if (l <= -35.0) return Condition::Weak;
  if (l <= -10.0) return Condition::Moderate;
  return Condition::Strong;
}

double si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  if (est.size() != ref.size()) throw ConfigError("si_sdr: length mismatch");
  if (est.empty()) throw ConfigError("si_sdr: empty input");
  double dot = 0.0;
  double ref2 = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    dot += est[i] * ref[i];
    ref2 += ref[i] * ref[i];
  }
  if (ref2 == 0.0) throw NumericalError("undefined SI-SDR for a silent reference");
  const double a = dot / ref2;
  double s2 = 0.0;
  double e2 = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = a * ref[i];
    const double e = est[i] - s;
    s2 += s * s;
    e2 += e * e;
  }
  // A zero projection (silent or orthogonal estimate) floors even when the
  // error energy is also zero, so the silent-estimate case lands at the cap.
  if (s2 == 0.0) return -kSdrCapDb;
  if (e2 == 0.0) return kSdrCapDb;
  const double db = 10.0 * std::log10(s2 / e2);
  return std::clamp(db, -kSdrCapDb, kSdrCapDb);
}

double si_sdr_improvement(const std::vector<double>& est, const std::vector<double>& ref,
                          const std::vector<double>& mix) {
  return si_sdr(est, ref) - si_sdr(mix, ref);
}

double dbfs_of(const std::vector<double>& x, int sample_rate) {
  return dsp::dbfs(dsp::Waveform(x, sample_rate));
}

double dbfs_abs_error(const std::vector<double>& est, const std::vector<double>& ref,
                      int sample_rate) {
  const double r = dbfs_of(ref, sample_rate);
  if (r <= kSilenceDbfs) throw NumericalError("dbfs_abs_error: silent reference");
  return std::abs(dbfs_of(est, sample_rate) - r);
}

EvalResult evaluate(const scenegen::Manifest& manifest, const models::ModelState* separator,
                    const EvalConfig& cfg) {
  cfg.stft.validate();
  if (cfg.classes.empty()) throw ConfigError("evaluate: class list is empty");
  if (separator == nullptr && !cfg.baseline_mixture)
    throw ConfigError("evaluate: separator model required unless scoring the mixture");
  if (separator != nullptr) {
    if (separator->kind != "separator")
      throw ConfigError("evaluate: model is not a separator");
    if (separator->n_classes != cfg.classes.size())
      throw ConfigError("evaluate: separator class count does not match class list");
  }

  EvalResult out;
  for (const auto& rec : manifest.records) {
    const dsp::Waveform mix = wav::read(manifest.resolve(rec.mixture));
    if (mix.sample_rate != rec.sample_rate)
      throw IoError("clip " + rec.clip_id + ": sample rate does not match manifest");
    const dsp::ComplexSpectrogram spec = dsp::stft(mix, cfg.stft);
    if (separator != nullptr && spec.rows != separator->n_freq)
      throw ConfigError("evaluate: separator bin count does not match the transform");
    const auto [lo, hi] = dsp::interior_range(cfg.stft, mix.size());
    const std::vector<double> mix_in = slice(mix.samples, lo, hi);
    const Condition cond =
        condition_of(rec.background ? std::optional<double>(rec.background->lufs)
                                    : std::nullopt);

    std::vector<Mat> masks;
    if (!cfg.baseline_mixture) {
      const Mat xlog = dsp::log_magnitude(spec);
      masks = models::forward_separator(*separator, xlog);
    }

    for (std::size_t i = 0; i < cfg.classes.size(); ++i) {
      const std::string& cname = cfg.classes[i];
      const auto lab = rec.labels.find(cname);
      if (lab == rec.labels.end())
        throw ConfigError("clip " + rec.clip_id + ": manifest lacks class " + cname);

      std::vector<double> est;
      if (cfg.baseline_mixture) {
        est = mix_in;
      } else {
        const dsp::Waveform w = dsp::reconstruct_source(masks[i], spec);
        est = slice(w.samples, lo, hi);
      }

      if (lab->second == 0) {
        out.leakage.push_back({rec.clip_id, cname, dbfs_of(est, mix.sample_rate), cond});
        continue;
      }

      const auto stem_it = rec.stems.find(cname);
      if (stem_it == rec.stems.end() || !stem_it->second.has_value())
        throw ConfigError("clip " + rec.clip_id + ": no ground-truth stem for active class " +
                          cname);
      const dsp::Waveform ref = wav::read(manifest.resolve(*stem_it->second));
      if (ref.sample_rate != mix.sample_rate || ref.size() != mix.size())
        throw IoError("clip " + rec.clip_id + ": stem " + cname +
                      " does not match the mixture");
      const std::vector<double> ref_in = slice(ref.samples, lo, hi);
      if (dbfs_of(ref_in, mix.sample_rate) <= kSilenceDbfs) {
        out.skipped.push_back("clip " + rec.clip_id + " class " + cname +
                              ": reference silent over the scored region");
        continue;
      }

      EvalRecord r;
      r.clip_id = rec.clip_id;
      r.class_name = cname;
      r.si_sdr_db = si_sdr(est, ref_in);
      r.si_sdri_db = r.si_sdr_db - si_sdr(mix_in, ref_in);
      r.dbfs_est = dbfs_of(est, mix.sample_rate);
      r.dbfs_ref = dbfs_of(ref_in, mix.sample_rate);
      r.dbfs_abs_err = std::abs(r.dbfs_est - r.dbfs_ref);
      r.condition = cond;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw NumericalError("quantile of an empty sample");
  if (p < 0.0 || p > 1.0) throw ConfigError("quantile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records,
                                  const std::vector<std::string>& group_keys,
                                  const std::string& model_label) {
  bool by_condition = false;
  bool by_class = false;
  for (const auto& k : group_keys) {
    if (k == "condition") by_condition = true;
    else if (k == "class") by_class = true;
    else throw ConfigError("summarize: unknown group key " + k);
  }

  // Condition order is severity order, not alphabetical.
  auto cond_rank = [](const std::string& c) {
    if (c == "") return 0;
    if (c == "none") return 1;
    if (c == "weak") return 2;
    if (c == "moderate") return 3;
    return 4;
  };

  std::map<std::pair<std::string, std::string>, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records) {
    const std::string c = by_condition ? condition_name(r.condition) : "";
    const std::string k = by_class ? r.class_name : "";
    groups[{c, k}].push_back(&r);
  }

  std::vector<std::pair<std::string, std::string>> keys;
  keys.reserve(groups.size());
  for (const auto& [k, v] : groups) keys.push_back(k);
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    if (cond_rank(a.first) != cond_rank(b.first)) return cond_rank(a.first) < cond_rank(b.first);
    return a.second < b.second;
  });

  const std::vector<std::pair<std::string, double EvalRecord::*>> metric_fields = {
      {"si_sdr", &EvalRecord::si_sdr_db},
      {"si_sdri", &EvalRecord::si_sdri_db},
      {"dbfs_abs_err", &EvalRecord::dbfs_abs_err},
  };

  std::vector<SummaryRow> rows;
  for (const auto& key : keys) {
    const auto& members = groups[key];
    for (const auto& [mname, field] : metric_fields) {
      std::vector<double> vals;
      vals.reserve(members.size());
      for (const EvalRecord* r : members) vals.push_back(r->*field);
      SummaryRow row;
      row.model = model_label;
      row.condition = key.first;
      row.class_name = key.second;
      row.metric = mname;
      row.median = quantile_type7(vals, 0.5);
      row.q1 = quantile_type7(vals, 0.25);
      row.q3 = quantile_type7(vals, 0.75);
      row.n = vals.size();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

nlohmann::json record_json(const EvalRecord& r) {
  nlohmann::json j;
  j["clip_id"] = r.clip_id;
  j["class"] = r.class_name;
  j["si_sdr_db"] = r.si_sdr_db;
  j["si_sdri_db"] = r.si_sdri_db;
  j["dbfs_est"] = r.dbfs_est;
  j["dbfs_ref"] = r.dbfs_ref;
  j["dbfs_abs_err"] = r.dbfs_abs_err;
  j["condition"] = condition_name(r.condition);
  return j;
}

nlohmann::json leakage_json(const LeakageRecord& r) {
  nlohmann::json j;
  j["clip_id"] = r.clip_id;
  j["class"] = r.class_name;
  j["dbfs_est"] = r.dbfs_est;
  j["condition"] = condition_name(r.condition);
  return j;
}

}  // namespace

void write_records(const EvalResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : result.records) {
    nlohmann::json j = record_json(r);
    j["kind"] = "score";
    out << j.dump() << "\n";
  }
  for (const auto& r : result.leakage) {
    nlohmann::json j = leakage_json(r);
    j["kind"] = "leakage";
    out << j.dump() << "\n";
  }
  for (const auto& s : result.skipped) {
    nlohmann::json j;
    j["kind"] = "skipped";
    j["reason"] = s;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing " + path.string());
}

EvalResult read_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  EvalResult out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("records line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "score") {
        EvalRecord r;
        r.clip_id = j.at("clip_id").get<std::string>();
        r.class_name = j.at("class").get<std::string>();
        r.si_sdr_db = j.at("si_sdr_db").get<double>();
        r.si_sdri_db = j.at("si_sdri_db").get<double>();
        r.dbfs_est = j.at("dbfs_est").get<double>();
        r.dbfs_ref = j.at("dbfs_ref").get<double>();
        r.dbfs_abs_err = j.at("dbfs_abs_err").get<double>();
        r.condition = condition_from_name(j.at("condition").get<std::string>());
        out.records.push_back(std::move(r));
      } else if (kind == "leakage") {
        LeakageRecord r;
        r.clip_id = j.at("clip_id").get<std::string>();
        r.class_name = j.at("class").get<std::string>();
        r.dbfs_est = j.at("dbfs_est").get<double>();
        r.condition = condition_from_name(j.at("condition").get<std::string>());
        out.leakage.push_back(std::move(r));
      } else if (kind == "skipped") {
        out.skipped.push_back(j.at("reason").get<std::string>());
      } else {
        throw IoError("records line " + std::to_string(lineno) + ": unknown kind " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace levelsep::metrics
