// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_RUNCFG_HPP
#define LEVELSEP_RUNCFG_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "levelsep/dsp.hpp"
#include "levelsep/losses.hpp"
#include "levelsep/models.hpp"
#include "levelsep/scenegen.hpp"
#include "levelsep/tfagg.hpp"

namespace levelsep::runcfg {

// Whole-run configuration. Every field has a default, so an empty JSON
// object is a valid config; unknown keys are rejected.
struct RunConfig {
  dsp::StftConfig stft;  // n_fft 512, hop 128
  int mel_bands = 40;
  std::vector<std::string> classes;  // default: the built-in stem classes

  // loss
  std::vector<std::string> aggregation = {"tf-mel", "spectrum-mel", "global"};
  double alpha = 100.0;
  double beta = 1.0;
  double salience_threshold = 0.01;
  bool epsilon_auto = true;                // estimate margins from the training set
  std::map<std::string, double> epsilon;   // explicit margins when epsilon_auto is false

  // training
  models::TrainConfig train;
  models::SeparatorArch separator;
  models::ClassifierArch classifier;

  // scene synthesis
  double scene_duration_s = 4.0;
  int sample_rate = 16000;
  double lambda = 5.0;
  std::vector<std::optional<double>> background_levels;
  std::string assign = "cycle";
  std::uint64_t scene_seed = 0;

  void validate() const;

  scenegen::SceneConfig scene_config() const;
  tfagg::FilterBank mel_bank() const;
  tfagg::FilterBank linear_bank() const;
  tfagg::AggregationSet aggregation_set() const;
  // Margins must already be resolved to numbers (see pipeline::resolve_epsilon).
  losses::LossConfig loss_config(const std::map<std::string, double>& eps) const;
};

RunConfig default_config();

// Strict JSON parsing: defaults fill absent fields, unknown keys raise
// ConfigError. epsilon is either the string "auto" or a name->margin object.
RunConfig config_from_text(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical serialization with every default materialized and keys sorted;
// load(save(c)) reproduces c exactly.
std::string config_to_text(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace levelsep::runcfg

#endif  // LEVELSEP_RUNCFG_HPP
