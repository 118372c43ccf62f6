// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_PIPELINE_HPP
#define LEVELSEP_PIPELINE_HPP

#include <map>
#include <string>
#include <vector>

#include "levelsep/models.hpp"
#include "levelsep/runcfg.hpp"
#include "levelsep/scenegen.hpp"

namespace levelsep::pipeline {

// Manifest clips prepared for training: transform the mixtures and order the
// labels by cfg.classes. Every record must carry every configured class.
std::vector<models::TrainClip> load_clips(const scenegen::Manifest& manifest,
                                          const runcfg::RunConfig& cfg);

// Per-aggregation margins. Explicit configs pass through; "auto" estimates
// from ground-truth stems when every active class in the manifest has one,
// else from background-only clips, else demands explicit values.
std::map<std::string, double> resolve_epsilon(const scenegen::Manifest& manifest,
                                              const runcfg::RunConfig& cfg);

models::TrainResult run_train_classifier(const scenegen::Manifest& train,
                                         const scenegen::Manifest& val,
                                         const runcfg::RunConfig& cfg);

struct SeparatorRun {
  models::TrainResult result;
  std::map<std::string, double> epsilon;  // margins actually used
};

SeparatorRun run_train_separator(const scenegen::Manifest& train, const scenegen::Manifest& val,
                                 const runcfg::RunConfig& cfg,
                                 const models::ModelState& classifier);

}  // namespace levelsep::pipeline

#endif  // LEVELSEP_PIPELINE_HPP
