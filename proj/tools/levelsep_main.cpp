// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levelsep/common.hpp"
#include "levelsep/metrics.hpp"
#include "levelsep/models.hpp"
#include "levelsep/pipeline.hpp"
#include "levelsep/report.hpp"
#include "levelsep/runcfg.hpp"
#include "levelsep/scenegen.hpp"
#include "levelsep/wav.hpp"

namespace {

using namespace levelsep;

// Prevents concurrent runs against one output directory; removed on exit.
struct DirLock {
  std::filesystem::path path;

  explicit DirLock(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    path = dir / ".levelsep.lock";
    if (std::filesystem::exists(path))
      throw IoError("output directory is locked: " + path.string() +
                    " (remove the lock file if no other run is active)");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create lock file " + path.string());
    f << "locked\n";
  }

  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

  ~DirLock() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

// Wall-clock info stays in this sidecar so every other output is
// bit-reproducible.
void write_run_info(const std::filesystem::path& dir, const std::string& command) {
  std::ofstream f(dir / "run_info.txt", std::ios::binary);
  if (!f) throw IoError("cannot write run_info.txt in " + dir.string());
  const std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  f << "command: " << command << "\n" << "time: " << buf << "\n";
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

runcfg::RunConfig load_config_opt(const std::string& config_path) {
  if (config_path.empty()) {
    runcfg::RunConfig cfg = runcfg::default_config();
    cfg.validate();
    return cfg;
  }
  return runcfg::load_config(config_path);
}

scenegen::StemPool load_stem_pool(const std::string& dir, const runcfg::RunConfig& cfg) {
  scenegen::StemPool pool;
  if (dir.empty()) return pool;
  pool.builtin = false;
  for (const auto& cname : cfg.classes) {
    const std::filesystem::path cdir = std::filesystem::path(dir) / cname;
    if (!std::filesystem::is_directory(cdir))
      throw IoError("stem directory missing for class " + cname + ": " + cdir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(cdir))
      if (entry.path().extension() == ".wav") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .wav stems for class " + cname + " in " + cdir.string());
    for (const auto& f : files) {
      dsp::Waveform w = wav::read(f);
      if (w.sample_rate != cfg.sample_rate)
        throw ConfigError("stem " + f.string() + " sample rate does not match the config");
      pool.by_class[cname].push_back(std::move(w));
    }
  }
  return pool;
}

scenegen::BackgroundPool load_background_pool(const std::string& dir,
                                              const runcfg::RunConfig& cfg) {
  scenegen::BackgroundPool pool;
  if (dir.empty()) return pool;
  pool.builtin = false;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".wav") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav backgrounds in " + dir);
  for (const auto& f : files) {
    dsp::Waveform w = wav::read(f);
    if (w.sample_rate != cfg.sample_rate)
      throw ConfigError("background " + f.string() + " sample rate does not match the config");
    pool.clips.push_back(std::move(w));
  }
  return pool;
}

void write_training_log(const std::filesystem::path& dir, const models::TrainResult& result,
                        const std::map<std::string, double>& epsilon) {
  std::ofstream f(dir / "training_log.txt", std::ios::binary);
  if (!f) throw IoError("cannot write training_log.txt in " + dir.string());
  for (const auto& [name, eps] : epsilon) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", eps);
    f << "epsilon " << name << " " << buf << "\n";
  }
  for (std::size_t i = 0; i < result.epochs.size(); ++i) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch %zu train %.12g val %.12g", i + 1,
                  result.epochs[i].train, result.epochs[i].val);
    f << buf << "\n";
  }
  f << "best_val " << result.model.meta.best_val_loss << "\n";
}

void print_eval_summary(const metrics::EvalResult& result) {
  std::cout << "records " << result.records.size() << " leakage " << result.leakage.size()
            << " skipped " << result.skipped.size() << "\n";
  const auto rows = metrics::summarize(result.records, {"condition"}, "model");
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s %s median %.3f q1 %.3f q3 %.3f n %zu",
                  r.condition.empty() ? "all" : r.condition.c_str(), r.metric.c_str(), r.median,
                  r.q1, r.q3, r.n);
    std::cout << buf << "\n";
  }
}

// ---- commands ----

struct SynthArgs {
  std::string config, stems, backgrounds, out, split;
  int count = 0;
};

int cmd_synth(const SynthArgs& a) {
  runcfg::RunConfig cfg = load_config_opt(a.config);
  scenegen::SceneConfig sc = cfg.scene_config();
  if (!a.split.empty()) sc.seed = scenegen::derive_seed(sc.seed, fnv1a64(a.split));
  const scenegen::StemPool stems = load_stem_pool(a.stems, cfg);
  const scenegen::BackgroundPool backgrounds = load_background_pool(a.backgrounds, cfg);

  DirLock lock(a.out);
  const scenegen::DatasetStats stats =
      scenegen::synthesize_dataset(stems, backgrounds, sc, a.count, a.out);
  runcfg::write_config(cfg, std::filesystem::path(a.out) / "effective_config.json");
  write_run_info(a.out, "synth");
  std::cout << "clips " << stats.clips << "\n";
  for (const auto& [cname, n] : stats.events_per_class)
    std::cout << "events " << cname << " " << n << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, val, classifier, out;
};

int cmd_train_classifier(const TrainArgs& a) {
  const runcfg::RunConfig cfg = load_config_opt(a.config);
  const scenegen::Manifest train = scenegen::read_manifest(a.data);
  const scenegen::Manifest val = scenegen::read_manifest(a.val);

  DirLock lock(a.out);
  const models::TrainResult result = pipeline::run_train_classifier(train, val, cfg);
  models::save_model(result.model, (std::filesystem::path(a.out) / "model.json").string());
  write_training_log(a.out, result, {});
  runcfg::write_config(cfg, std::filesystem::path(a.out) / "effective_config.json");
  write_run_info(a.out, "train-classifier");
  std::cout << "epochs " << result.epochs.size() << " best_val " << result.model.meta.best_val_loss
            << "\n";
  return 0;
}

int cmd_train_separator(const TrainArgs& a) {
  const runcfg::RunConfig cfg = load_config_opt(a.config);
  const scenegen::Manifest train = scenegen::read_manifest(a.data);
  const scenegen::Manifest val = scenegen::read_manifest(a.val);
  const models::ModelState classifier = models::load_model(a.classifier);

  DirLock lock(a.out);
  const pipeline::SeparatorRun run = pipeline::run_train_separator(train, val, cfg, classifier);
  models::save_model(run.result.model, (std::filesystem::path(a.out) / "model.json").string());
  write_training_log(a.out, run.result, run.epsilon);
  runcfg::write_config(cfg, std::filesystem::path(a.out) / "effective_config.json");
  write_run_info(a.out, "train-separator");
  std::cout << "epochs " << run.result.epochs.size() << " best_val "
            << run.result.model.meta.best_val_loss << "\n";
  return 0;
}

struct EvalArgs {
  std::string config, data, separator, out;
  bool baseline_mixture = false;
};

int cmd_eval(const EvalArgs& a) {
  const runcfg::RunConfig cfg = load_config_opt(a.config);
  const scenegen::Manifest manifest = scenegen::read_manifest(a.data);
  std::optional<models::ModelState> separator;
  if (!a.separator.empty()) separator = models::load_model(a.separator);
  if (!separator.has_value() && !a.baseline_mixture)
    throw ConfigError("--separator is required unless --baseline-mixture is given");

  metrics::EvalConfig ec;
  ec.stft = cfg.stft;
  ec.classes = cfg.classes;
  ec.baseline_mixture = a.baseline_mixture;

  DirLock lock(a.out);
  const metrics::EvalResult result =
      metrics::evaluate(manifest, separator.has_value() ? &*separator : nullptr, ec);
  metrics::write_records(result, std::filesystem::path(a.out) / "records.jsonl");
  runcfg::write_config(cfg, std::filesystem::path(a.out) / "effective_config.json");
  write_run_info(a.out, "eval");
  print_eval_summary(result);
  return 0;
}

struct ReportArgs {
  std::vector<std::string> results;
  std::vector<std::string> labels;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  if (a.results.empty()) throw ConfigError("report: at least one --results file required");
  if (a.labels.size() != a.results.size())
    throw ConfigError("report: --labels count must match --results count");

  std::vector<std::pair<std::string, std::vector<metrics::EvalRecord>>> models;
  for (std::size_t i = 0; i < a.results.size(); ++i)
    models.emplace_back(a.labels[i], metrics::read_records(a.results[i]).records);

  DirLock lock(a.out);
  report::write_report(models, a.out);
  write_run_info(a.out, "report");
  std::cout << "report written to " << a.out << "\n";
  return 0;
}

struct AblateArgs {
  std::string config, data, val, test, classifier, out;
  bool list_only = false;
};

struct AblateVariant {
  std::string name;
  std::vector<std::string> aggregation;
  bool margin = false;
  bool residual_cls = false;
};

std::vector<AblateVariant> ablate_grid() {
  const std::vector<std::pair<std::string, std::vector<std::string>>> agg_axis = {
      {"tf-mel", {"tf-mel"}},
      {"tf-linear", {"tf-linear"}},
      {"spectrum-mel", {"spectrum-mel"}},
      {"spectrum-linear", {"spectrum-linear"}},
      {"global", {"global"}},
      {"all-mel", {"tf-mel", "spectrum-mel", "global"}},
      {"all-linear", {"tf-linear", "spectrum-linear", "global"}},
  };
  std::vector<AblateVariant> grid;
  for (const auto& [aname, specs] : agg_axis)
    for (const bool margin : {false, true})
      for (const bool rescls : {false, true}) {
        AblateVariant v;
        v.name = aname + (margin ? "-margin1" : "-margin0") + (rescls ? "-rescls1" : "-rescls0");
        v.aggregation = specs;
        v.margin = margin;
        v.residual_cls = rescls;
        grid.push_back(std::move(v));
      }
  return grid;
}

int cmd_ablate(const AblateArgs& a) {
  const runcfg::RunConfig base = load_config_opt(a.config);
  const std::vector<AblateVariant> grid = ablate_grid();
  if (a.list_only) {
    for (const auto& v : grid) std::cout << v.name << "\n";
    return 0;
  }

  const scenegen::Manifest train = scenegen::read_manifest(a.data);
  const scenegen::Manifest val = scenegen::read_manifest(a.val);
  const scenegen::Manifest test = scenegen::read_manifest(a.test);
  const models::ModelState classifier = models::load_model(a.classifier);

  DirLock lock(a.out);
  std::vector<std::pair<std::string, std::vector<metrics::EvalRecord>>> results;
  for (const auto& v : grid) {
    runcfg::RunConfig cfg = base;
    cfg.aggregation = v.aggregation;
    if (v.margin) {
      cfg.epsilon_auto = true;
      cfg.epsilon.clear();
    } else {
      cfg.epsilon_auto = false;
      cfg.epsilon.clear();  // absent names mean zero margin
    }
    cfg.beta = v.residual_cls ? base.beta : 0.0;
    cfg.train.seed = scenegen::derive_seed(base.train.seed, fnv1a64(v.name));
    cfg.validate();

    const std::filesystem::path vdir = std::filesystem::path(a.out) / v.name;
    std::filesystem::create_directories(vdir);
    const pipeline::SeparatorRun run = pipeline::run_train_separator(train, val, cfg, classifier);
    models::save_model(run.result.model, (vdir / "model.json").string());
    write_training_log(vdir, run.result, run.epsilon);
    runcfg::write_config(cfg, vdir / "effective_config.json");

    metrics::EvalConfig ec;
    ec.stft = cfg.stft;
    ec.classes = cfg.classes;
    const metrics::EvalResult er = metrics::evaluate(test, &run.result.model, ec);
    metrics::write_records(er, vdir / "records.jsonl");
    results.emplace_back(v.name, er.records);
    std::cout << "variant " << v.name << " epochs " << run.result.epochs.size() << "\n";
  }
  report::write_report(results, std::filesystem::path(a.out) / "report");
  write_run_info(a.out, "ablate");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly supervised source-specific sound level estimation toolkit"};
  app.require_subcommand(1);
  std::string workdir;
  app.add_option("--workdir", workdir, "root directory all relative paths resolve against");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "synthesize an annotated dataset");
  synth->add_option("--config", synth_args.config, "run config JSON");
  synth->add_option("--stems", synth_args.stems, "directory of per-class stem WAVs");
  synth->add_option("--backgrounds", synth_args.backgrounds, "directory of background WAVs");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--count", synth_args.count, "number of clips")->required();
  synth->add_option("--split", synth_args.split, "split name salting the dataset seed");

  TrainArgs clf_args;
  CLI::App* tclf = app.add_subcommand("train-classifier", "train the clip-level classifier");
  tclf->add_option("--config", clf_args.config, "run config JSON");
  tclf->add_option("--data", clf_args.data, "training manifest")->required();
  tclf->add_option("--val", clf_args.val, "validation manifest")->required();
  tclf->add_option("--out", clf_args.out, "output directory")->required();

  TrainArgs sep_args;
  CLI::App* tsep = app.add_subcommand("train-separator", "train the masking separator");
  tsep->add_option("--config", sep_args.config, "run config JSON");
  tsep->add_option("--data", sep_args.data, "training manifest")->required();
  tsep->add_option("--val", sep_args.val, "validation manifest")->required();
  tsep->add_option("--classifier", sep_args.classifier, "frozen classifier artifact")->required();
  tsep->add_option("--out", sep_args.out, "output directory")->required();

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a separator on a manifest");
  ev->add_option("--config", eval_args.config, "run config JSON");
  ev->add_option("--data", eval_args.data, "evaluation manifest")->required();
  ev->add_option("--separator", eval_args.separator, "separator artifact");
  ev->add_option("--out", eval_args.out, "output directory")->required();
  ev->add_flag("--baseline-mixture", eval_args.baseline_mixture,
               "score the unprocessed mixture as every source estimate");

  ReportArgs report_args;
  CLI::App* rep = app.add_subcommand("report", "summarize evaluation records");
  rep->add_option("--results", report_args.results, "records JSONL files")->required();
  rep->add_option("--labels", report_args.labels, "model labels, one per results file")
      ->required();
  rep->add_option("--out", report_args.out, "output directory")->required();

  AblateArgs ablate_args;
  CLI::App* ab = app.add_subcommand("ablate", "run the aggregation/margin/classification grid");
  ab->add_option("--config", ablate_args.config, "run config JSON");
  ab->add_option("--data", ablate_args.data, "training manifest");
  ab->add_option("--val", ablate_args.val, "validation manifest");
  ab->add_option("--test", ablate_args.test, "test manifest");
  ab->add_option("--classifier", ablate_args.classifier, "frozen classifier artifact");
  ab->add_option("--out", ablate_args.out, "output directory");
  ab->add_flag("--list", ablate_args.list_only, "print variant names without running");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!workdir.empty()) {
      std::error_code ec;
      std::filesystem::current_path(workdir, ec);
      if (ec) throw levelsep::IoError("cannot enter workdir " + workdir);
    }
    if (synth->parsed()) return cmd_synth(synth_args);
    if (tclf->parsed()) return cmd_train_classifier(clf_args);
    if (tsep->parsed()) return cmd_train_separator(sep_args);
    if (ev->parsed()) return cmd_eval(eval_args);
    if (rep->parsed()) return cmd_report(report_args);
    if (ab->parsed()) {
      if (!ablate_args.list_only &&
          (ablate_args.data.empty() || ablate_args.val.empty() || ablate_args.test.empty() ||
           ablate_args.classifier.empty() || ablate_args.out.empty()))
        throw levelsep::ConfigError(
            "ablate requires --data, --val, --test, --classifier and --out unless --list");
      return cmd_ablate(ablate_args);
    }
    return 2;
  } catch (const levelsep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const levelsep::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const levelsep::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
