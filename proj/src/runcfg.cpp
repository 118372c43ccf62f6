// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/runcfg.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace levelsep::runcfg {

namespace {

using nlohmann::json;

void expect_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.find(key) == allowed.end())
      throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  stft.validate();
  if (mel_bands < 1) throw ConfigError("mel_bands must be positive");
  if (classes.empty()) throw ConfigError("classes must not be empty");
  scene_config().validate();
  if (aggregation.empty()) throw ConfigError("loss.aggregation must not be empty");
  // Resolves every aggregation name, throwing on unknown ones.
  (void)aggregation_set();
  {
    std::set<std::string> names(aggregation.begin(), aggregation.end());
    if (names.size() != aggregation.size())
      throw ConfigError("loss.aggregation contains duplicates");
    for (const auto& [name, eps] : epsilon) {
      if (names.find(name) == names.end())
        throw ConfigError("loss.epsilon names unknown aggregation \"" + name + "\"");
      if (!(eps >= 0.0)) throw ConfigError("loss.epsilon values must be nonnegative");
    }
  }
  if (!(alpha >= 0.0)) throw ConfigError("loss.alpha must be nonnegative");
  if (!(beta >= 0.0)) throw ConfigError("loss.beta must be nonnegative");
  if (!(salience_threshold >= 0.0 && salience_threshold <= 1.0))
    throw ConfigError("loss.salience_threshold must lie in [0, 1]");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (train.batch < 1) throw ConfigError("train.batch must be positive");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (train.patience < 1) throw ConfigError("train.patience must be positive");
  if (separator.context_radius < 0) throw ConfigError("separator.context_radius must be >= 0");
  for (int h : separator.hidden)
    if (h < 1) throw ConfigError("separator.hidden sizes must be positive");
  for (int h : classifier.hidden)
    if (h < 1) throw ConfigError("classifier.hidden sizes must be positive");
}

scenegen::SceneConfig RunConfig::scene_config() const {
  scenegen::SceneConfig sc;
  sc.duration_s = scene_duration_s;
  sc.sample_rate = sample_rate;
  sc.classes = classes;
  sc.lambda = lambda;
  sc.background_levels = background_levels;
  sc.assign = assign;
  sc.seed = scene_seed;
  return sc;
}

tfagg::FilterBank RunConfig::mel_bank() const {
  return tfagg::mel_filterbank(stft.n_fft, mel_bands, sample_rate);
}

tfagg::FilterBank RunConfig::linear_bank() const { return tfagg::linear_filterbank(stft.n_fft); }

tfagg::AggregationSet RunConfig::aggregation_set() const {
  return tfagg::set_by_names(aggregation, mel_bank(), linear_bank());
}

losses::LossConfig RunConfig::loss_config(const std::map<std::string, double>& eps) const {
  losses::LossConfig lc;
  lc.alpha = alpha;
  lc.beta = beta;
  lc.salience_threshold = salience_threshold;
  lc.aggregation_set = aggregation_set();
  lc.epsilon = eps;
  lc.validate();
  return lc;
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.classes = scenegen::builtin_classes();
  return cfg;
}

RunConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  expect_keys(j, "config",
              {"stft", "mel_bands", "classes", "loss", "train", "separator", "classifier",
               "scene"});

  RunConfig cfg = default_config();

  if (j.contains("stft")) {
    const json& s = j["stft"];
    expect_keys(s, "stft", {"n_fft", "hop"});
    get_if(s, "n_fft", cfg.stft.n_fft, "stft");
    get_if(s, "hop", cfg.stft.hop, "stft");
  }
  get_if(j, "mel_bands", cfg.mel_bands, "config");
  get_if(j, "classes", cfg.classes, "config");

  if (j.contains("loss")) {
    const json& l = j["loss"];
    expect_keys(l, "loss", {"aggregation", "alpha", "beta", "epsilon", "salience_threshold"});
    get_if(l, "aggregation", cfg.aggregation, "loss");
    get_if(l, "alpha", cfg.alpha, "loss");
    get_if(l, "beta", cfg.beta, "loss");
    get_if(l, "salience_threshold", cfg.salience_threshold, "loss");
    if (l.contains("epsilon")) {
      const json& e = l["epsilon"];
      if (e.is_string()) {
        if (e.get<std::string>() != "auto")
          throw ConfigError("loss.epsilon: expected \"auto\" or a name->margin object");
        cfg.epsilon_auto = true;
        cfg.epsilon.clear();
      } else if (e.is_object()) {
        cfg.epsilon_auto = false;
        cfg.epsilon.clear();
        for (const auto& [name, value] : e.items()) {
          if (!value.is_number())
            throw ConfigError("loss.epsilon." + name + ": expected a number");
          cfg.epsilon[name] = value.get<double>();
        }
      } else {
        throw ConfigError("loss.epsilon: expected \"auto\" or a name->margin object");
      }
    }
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    expect_keys(t, "train", {"lr", "batch", "max_epochs", "patience", "seed", "clip_norm"});
    get_if(t, "lr", cfg.train.lr, "train");
    get_if(t, "batch", cfg.train.batch, "train");
    get_if(t, "max_epochs", cfg.train.max_epochs, "train");
    get_if(t, "patience", cfg.train.patience, "train");
    get_if(t, "seed", cfg.train.seed, "train");
    get_if(t, "clip_norm", cfg.train.clip_norm, "train");
  }

  if (j.contains("separator")) {
    const json& s = j["separator"];
    expect_keys(s, "separator", {"context_radius", "hidden"});
    get_if(s, "context_radius", cfg.separator.context_radius, "separator");
    get_if(s, "hidden", cfg.separator.hidden, "separator");
  }

  if (j.contains("classifier")) {
    const json& c = j["classifier"];
    expect_keys(c, "classifier", {"hidden"});
    get_if(c, "hidden", cfg.classifier.hidden, "classifier");
  }

  if (j.contains("scene")) {
    const json& s = j["scene"];
    expect_keys(s, "scene",
                {"duration_s", "sample_rate", "lambda", "background_levels", "assign", "seed"});
    get_if(s, "duration_s", cfg.scene_duration_s, "scene");
    get_if(s, "sample_rate", cfg.sample_rate, "scene");
    get_if(s, "lambda", cfg.lambda, "scene");
    if (s.contains("background_levels")) {
      const json& b = s["background_levels"];
      if (!b.is_array()) throw ConfigError("scene.background_levels: expected an array");
      cfg.background_levels.clear();
      for (const auto& entry : b) {
        if (entry.is_null()) {
          cfg.background_levels.push_back(std::nullopt);
        } else if (entry.is_number()) {
          cfg.background_levels.push_back(entry.get<double>());
        } else {
          throw ConfigError("scene.background_levels entries must be numbers or null");
        }
      }
    }
    get_if(s, "assign", cfg.assign, "scene");
    get_if(s, "seed", cfg.scene_seed, "scene");
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str());
}

std::string config_to_text(const RunConfig& cfg) {
  json j;
  j["stft"] = {{"n_fft", cfg.stft.n_fft}, {"hop", cfg.stft.hop}};
  j["mel_bands"] = cfg.mel_bands;
  j["classes"] = cfg.classes;

  json l;
  l["aggregation"] = cfg.aggregation;
  l["alpha"] = cfg.alpha;
  l["beta"] = cfg.beta;
  if (cfg.epsilon_auto) {
    l["epsilon"] = "auto";
  } else {
    l["epsilon"] = json::object();
    for (const auto& [name, eps] : cfg.epsilon) l["epsilon"][name] = eps;
  }
  l["salience_threshold"] = cfg.salience_threshold;
  j["loss"] = l;

  j["train"] = {{"lr", cfg.train.lr},
                {"batch", cfg.train.batch},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},
                {"seed", cfg.train.seed},
                {"clip_norm", cfg.train.clip_norm}};
  j["separator"] = {{"context_radius", cfg.separator.context_radius},
                    {"hidden", cfg.separator.hidden}};
  j["classifier"] = {{"hidden", cfg.classifier.hidden}};

  json s;
  s["duration_s"] = cfg.scene_duration_s;
  s["sample_rate"] = cfg.sample_rate;
  s["lambda"] = cfg.lambda;
  s["background_levels"] = json::array();
  for (const auto& level : cfg.background_levels) {
    if (level.has_value())
      s["background_levels"].push_back(*level);
    else
      s["background_levels"].push_back(nullptr);
  }
  s["assign"] = cfg.assign;
  s["seed"] = cfg.scene_seed;
  j["scene"] = s;

  return j.dump(1, '\t') + "\n";
}

void write_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << config_to_text(cfg);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace levelsep::runcfg
