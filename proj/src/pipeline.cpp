// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/pipeline.hpp"

#include "levelsep/losses.hpp"
#include "levelsep/wav.hpp"

namespace levelsep::pipeline {

namespace {

dsp::ComplexSpectrogram clip_spectrogram(const scenegen::Manifest& manifest,
                                         const scenegen::ManifestRecord& rec,
                                         const runcfg::RunConfig& cfg) {
  const dsp::Waveform w = wav::read(manifest.resolve(rec.mixture));
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("clip " + rec.clip_id + ": sample rate " +
                      std::to_string(w.sample_rate) + " does not match the configured " +
                      std::to_string(cfg.sample_rate));
  return dsp::stft(w, cfg.stft);
}

std::vector<int> ordered_labels(const scenegen::ManifestRecord& rec,
                                const std::vector<std::string>& classes) {
  std::vector<int> y;
  y.reserve(classes.size());
  for (const auto& c : classes) {
    const auto it = rec.labels.find(c);
    if (it == rec.labels.end())
      throw ConfigError("clip " + rec.clip_id + ": manifest lacks class " + c);
    y.push_back(it->second);
  }
  return y;
}

}  // namespace

std::vector<models::TrainClip> load_clips(const scenegen::Manifest& manifest,
                                          const runcfg::RunConfig& cfg) {
  cfg.validate();
  std::vector<models::TrainClip> clips;
  clips.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    const dsp::ComplexSpectrogram spec = clip_spectrogram(manifest, rec, cfg);
    models::TrainClip clip;
    clip.xmag = dsp::magnitude(spec);
    clip.xlog = dsp::log_magnitude_of(clip.xmag);
    clip.labels = ordered_labels(rec, cfg.classes);
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::map<std::string, double> resolve_epsilon(const scenegen::Manifest& manifest,
                                              const runcfg::RunConfig& cfg) {
  if (!cfg.epsilon_auto) return cfg.epsilon;

  const tfagg::AggregationSet set = cfg.aggregation_set();

  bool stems_route = !manifest.records.empty();
  for (const auto& rec : manifest.records) {
    for (const auto& [cname, label] : rec.labels) {
      if (label != 1) continue;
      const auto it = rec.stems.find(cname);
      if (it == rec.stems.end() || !it->second.has_value()) {
        stems_route = false;
        break;
      }
    }
    if (!stems_route) break;
  }

  std::map<std::string, double> eps;
  if (stems_route) {
    std::map<std::string, double> sums;
    for (const auto& rec : manifest.records) {
      const Mat x = dsp::magnitude(clip_spectrogram(manifest, rec, cfg));
      Mat active_sum(x.rows, x.cols);
      for (const auto& [cname, label] : rec.labels) {
        if (label != 1) continue;
        const dsp::Waveform stem = wav::read(manifest.resolve(*rec.stems.at(cname)));
        const Mat smag = dsp::magnitude(dsp::stft(stem, cfg.stft));
        for (std::size_t i = 0; i < smag.size(); ++i) active_sum.v[i] += smag.v[i];
      }
      for (const auto& spec : set.specs)
        sums[spec.name] +=
            losses::estimate_epsilon_clip(x, active_sum, spec, cfg.salience_threshold);
    }
    for (const auto& spec : set.specs)
      eps[spec.name] = sums[spec.name] / static_cast<double>(manifest.records.size());
    return eps;
  }

  std::vector<const scenegen::ManifestRecord*> background_only;
  for (const auto& rec : manifest.records) {
    bool any_active = false;
    for (const auto& [cname, label] : rec.labels) any_active = any_active || label == 1;
    if (!any_active) background_only.push_back(&rec);
  }
  if (background_only.empty())
    throw ConfigError(
        "cannot estimate margins: the manifest has neither complete ground-truth stems nor "
        "background-only clips; pass explicit per-aggregation epsilon values");

  std::map<std::string, double> sums;
  for (const scenegen::ManifestRecord* rec : background_only) {
    const Mat b = dsp::magnitude(clip_spectrogram(manifest, *rec, cfg));
    const Mat zero(b.rows, b.cols);
    for (const auto& spec : set.specs)
      sums[spec.name] += losses::estimate_epsilon_clip(b, zero, spec, cfg.salience_threshold);
  }
  for (const auto& spec : set.specs)
    eps[spec.name] = sums[spec.name] / static_cast<double>(background_only.size());
  return eps;
}

namespace {

// The classifier trains on clips with no added background.
scenegen::Manifest background_free(const scenegen::Manifest& manifest) {
  scenegen::Manifest out;
  out.root = manifest.root;
  for (const auto& rec : manifest.records)
    if (!rec.background.has_value()) out.records.push_back(rec);
  return out;
}

}  // namespace

models::TrainResult run_train_classifier(const scenegen::Manifest& train,
                                         const scenegen::Manifest& val,
                                         const runcfg::RunConfig& cfg) {
  const scenegen::Manifest train_bf = background_free(train);
  const scenegen::Manifest val_bf = background_free(val);
  if (train_bf.records.empty() || val_bf.records.empty())
    throw ConfigError("classifier training requires background-free clips in both manifests");
  const auto train_clips = load_clips(train_bf, cfg);
  const auto val_clips = load_clips(val_bf, cfg);
  return models::train_classifier(train_clips, val_clips,
                                  static_cast<std::size_t>(cfg.stft.n_bins()),
                                  cfg.classes.size(), cfg.classifier, cfg.train);
}

SeparatorRun run_train_separator(const scenegen::Manifest& train, const scenegen::Manifest& val,
                                 const runcfg::RunConfig& cfg,
                                 const models::ModelState& classifier) {
  SeparatorRun out;
  out.epsilon = resolve_epsilon(train, cfg);
  const losses::LossConfig lc = cfg.loss_config(out.epsilon);
  const auto train_clips = load_clips(train, cfg);
  const auto val_clips = load_clips(val, cfg);
  out.result = models::train_separator(train_clips, val_clips,
                                       static_cast<std::size_t>(cfg.stft.n_bins()),
                                       cfg.classes.size(), cfg.separator, cfg.train, classifier,
                                       lc);
  return out;
}

}  // namespace levelsep::pipeline
