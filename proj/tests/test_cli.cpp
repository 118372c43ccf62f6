// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "levelsep/metrics.hpp"
#include "levelsep/runcfg.hpp"
#include "levelsep/scenegen.hpp"
#include "levelsep/wav.hpp"
#include "test_util.hpp"

using namespace levelsep;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const fs::path& dir, const std::string& args) {
  const fs::path out_file = dir / "cli_stdout.txt";
  const fs::path err_file = dir / "cli_stderr.txt";
  const std::string cmd = std::string(LEVELSEP_CLI_PATH) + " " + args + " >" +
                          out_file.string() + " 2>" + err_file.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::file_text(out_file);
  r.err = testutil::file_text(err_file);
  return r;
}

// Small, fast two-class setup shared by the pipeline tests.
runcfg::RunConfig small_config() {
  runcfg::RunConfig cfg = runcfg::default_config();
  cfg.stft.n_fft = 256;
  cfg.stft.hop = 64;
  cfg.mel_bands = 16;
  cfg.classes = {"tonestack", "noiseband"};
  cfg.scene_duration_s = 1.0;
  cfg.lambda = 2.0;
  cfg.train.lr = 1e-3;
  cfg.train.batch = 4;
  cfg.train.max_epochs = 3;
  cfg.train.patience = 2;
  cfg.separator.context_radius = 1;
  cfg.separator.hidden = {16};
  cfg.classifier.hidden = {16};
  return cfg;
}

void expect_dataset_files_equal(const fs::path& a, const fs::path& b) {
  const auto m = scenegen::read_manifest(a / "manifest.jsonl");
  CHECK(testutil::files_identical(a / "manifest.jsonl", b / "manifest.jsonl"));
  for (const auto& r : m.records) {
    CHECK(testutil::files_identical(a / r.mixture, b / r.mixture));
    for (const auto& [cls, p] : r.stems)
      if (p.has_value()) CHECK(testutil::files_identical(a / *p, b / *p));
    if (r.background.has_value())
      CHECK(testutil::files_identical(a / r.background->path, b / r.background->path));
  }
}

}  // namespace

TEST_CASE("synth writes a dataset, reproducibly, and salts per split") {
  const auto dir = testutil::scratch_dir("cli_synth");
  auto r = run_cli(dir, "synth --out " + (dir / "d1").string() + " --count 4");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("clips 4") != std::string::npos);
  CHECK(fs::exists(dir / "d1" / "manifest.jsonl"));
  CHECK(fs::exists(dir / "d1" / "effective_config.json"));
  CHECK(fs::exists(dir / "d1" / "run_info.txt"));
  CHECK_FALSE(fs::exists(dir / "d1" / ".levelsep.lock"));  // released on exit

  const auto m = scenegen::read_manifest(dir / "d1" / "manifest.jsonl");
  REQUIRE(m.records.size() == 4);
  CHECK(m.records[0].clip_id == "clip_000000");

  r = run_cli(dir, "synth --out " + (dir / "d2").string() + " --count 4");
  REQUIRE(r.code == 0);
  expect_dataset_files_equal(dir / "d1", dir / "d2");

  r = run_cli(dir, "synth --out " + (dir / "d3").string() + " --count 4 --split test");
  REQUIRE(r.code == 0);
  CHECK_FALSE(testutil::files_identical(dir / "d1" / "manifest.jsonl",
                                        dir / "d3" / "manifest.jsonl"));
}

TEST_CASE("synth honors configured background levels") {
  const auto dir = testutil::scratch_dir("cli_synth_bkg");
  runcfg::RunConfig cfg = small_config();
  cfg.background_levels = {0.0};
  runcfg::write_config(cfg, dir / "cfg.json");

  const auto r = run_cli(dir, "synth --config " + (dir / "cfg.json").string() + " --out " +
                                  (dir / "d").string() + " --count 3");
  REQUIRE(r.code == 0);
  const auto m = scenegen::read_manifest(dir / "d" / "manifest.jsonl");
  REQUIRE(m.records.size() == 3);
  for (const auto& rec : m.records) {
    REQUIRE(rec.background.has_value());
    CHECK(rec.background->lufs == 0.0);
    CHECK(std::abs(dsp::lufs_integrated(wav::read(m.resolve(rec.background->path)))) < 0.1);
  }
}

TEST_CASE("workdir resolves relative outputs") {
  const auto dir = testutil::scratch_dir("cli_workdir");
  const auto r =
      run_cli(dir, "--workdir " + dir.string() + " synth --out rel_out --count 1");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "rel_out" / "manifest.jsonl"));
}

TEST_CASE("usage and failure exit codes") {
  const auto dir = testutil::scratch_dir("cli_codes");

  CHECK(run_cli(dir, "frobnicate").code == 2);                       // unknown subcommand
  CHECK(run_cli(dir, "synth --out " + dir.string() + "/x").code == 2);  // missing --count
  CHECK(run_cli(dir, "").code == 2);                                 // subcommand required

  // Missing manifest: an I/O failure.
  auto r = run_cli(dir, "train-classifier --data " + (dir / "none.jsonl").string() + " --val " +
                            (dir / "none.jsonl").string() + " --out " + (dir / "t").string());
  CHECK(r.code == 3);
  CHECK(r.err.find("I/O error") != std::string::npos);

  // Bad config value: a config failure.
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"loss":{"alpha":-5}})" << "\n";
  }
  r = run_cli(dir, "synth --config " + (dir / "bad.json").string() + " --out " +
                       (dir / "y").string() + " --count 1");
  CHECK(r.code == 2);
  CHECK(r.err.find("config error") != std::string::npos);

  // A pre-existing lock blocks the run.
  fs::create_directories(dir / "locked");
  {
    std::ofstream lock(dir / "locked" / ".levelsep.lock");
    lock << "locked\n";
  }
  r = run_cli(dir, "synth --out " + (dir / "locked").string() + " --count 1");
  CHECK(r.code == 3);
  CHECK(r.err.find("locked") != std::string::npos);
  CHECK(fs::exists(dir / "locked" / ".levelsep.lock"));  // foreign lock is left in place
}

TEST_CASE("ablate --list prints the variant grid") {
  const auto dir = testutil::scratch_dir("cli_ablate_list");
  const auto r = run_cli(dir, "ablate --list");
  REQUIRE(r.code == 0);
  std::size_t lines = 0;
  for (char c : r.out) lines += (c == '\n');
  CHECK(lines == 28);
  CHECK(r.out.find("tf-mel-margin1-rescls1\n") != std::string::npos);
  CHECK(r.out.find("global-margin0-rescls0\n") != std::string::npos);
  CHECK(r.out.find("all-linear-margin1-rescls0\n") != std::string::npos);

  // Without --list, the data arguments are mandatory.
  CHECK(run_cli(dir, "ablate").code == 2);
}

TEST_CASE("train, evaluate, and report chain end to end") {
  const auto dir = testutil::scratch_dir("cli_chain");
  runcfg::RunConfig cfg = small_config();
  runcfg::write_config(cfg, dir / "cfg.json");
  const std::string cfg_arg = " --config " + (dir / "cfg.json").string();

  auto synth = [&](const std::string& split, int count) {
    const auto r = run_cli(dir, "synth" + cfg_arg + " --out " + (dir / split).string() +
                                    " --count " + std::to_string(count) + " --split " + split);
    REQUIRE(r.code == 0);
  };
  synth("train", 8);
  synth("val", 4);
  synth("test", 4);

  auto r = run_cli(dir, "train-classifier" + cfg_arg + " --data " +
                            (dir / "train" / "manifest.jsonl").string() + " --val " +
                            (dir / "val" / "manifest.jsonl").string() + " --out " +
                            (dir / "clf").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("epochs ") != std::string::npos);
  CHECK(r.out.find("best_val ") != std::string::npos);
  REQUIRE(fs::exists(dir / "clf" / "model.json"));
  const std::string clf_log = testutil::file_text(dir / "clf" / "training_log.txt");
  CHECK(clf_log.find("epoch 1 train ") != std::string::npos);
  CHECK(clf_log.find("best_val ") != std::string::npos);

  // Re-training with the same inputs reproduces the artifact byte for byte.
  r = run_cli(dir, "train-classifier" + cfg_arg + " --data " +
                       (dir / "train" / "manifest.jsonl").string() + " --val " +
                       (dir / "val" / "manifest.jsonl").string() + " --out " +
                       (dir / "clf2").string());
  REQUIRE(r.code == 0);
  CHECK(testutil::files_identical(dir / "clf" / "model.json", dir / "clf2" / "model.json"));

  r = run_cli(dir, "train-separator" + cfg_arg + " --data " +
                       (dir / "train" / "manifest.jsonl").string() + " --val " +
                       (dir / "val" / "manifest.jsonl").string() + " --classifier " +
                       (dir / "clf" / "model.json").string() + " --out " +
                       (dir / "sep").string());
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(dir / "sep" / "model.json"));
  const std::string sep_log = testutil::file_text(dir / "sep" / "training_log.txt");
  CHECK(sep_log.find("epsilon tf-mel ") != std::string::npos);
  CHECK(sep_log.find("epsilon spectrum-mel ") != std::string::npos);
  CHECK(sep_log.find("epsilon global ") != std::string::npos);
  CHECK(sep_log.find("epoch 1 train ") != std::string::npos);

  r = run_cli(dir, "eval" + cfg_arg + " --data " + (dir / "test" / "manifest.jsonl").string() +
                       " --separator " + (dir / "sep" / "model.json").string() + " --out " +
                       (dir / "ev_sep").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("records ") != std::string::npos);
  REQUIRE(fs::exists(dir / "ev_sep" / "records.jsonl"));
  const auto sep_res = metrics::read_records(dir / "ev_sep" / "records.jsonl");
  CHECK(!sep_res.records.empty());

  // Omitting the separator without asking for the baseline is a config error.
  r = run_cli(dir, "eval" + cfg_arg + " --data " + (dir / "test" / "manifest.jsonl").string() +
                       " --out " + (dir / "ev_none").string());
  CHECK(r.code == 2);

  r = run_cli(dir, "eval" + cfg_arg + " --data " + (dir / "test" / "manifest.jsonl").string() +
                       " --baseline-mixture --out " + (dir / "ev_base").string());
  REQUIRE(r.code == 0);
  const auto base_res = metrics::read_records(dir / "ev_base" / "records.jsonl");
  REQUIRE(!base_res.records.empty());
  for (const auto& rec : base_res.records) CHECK(rec.si_sdri_db == 0.0);

  r = run_cli(dir, "report --results " + (dir / "ev_base" / "records.jsonl").string() + " " +
                       (dir / "ev_sep" / "records.jsonl").string() +
                       " --labels baseline separated --out " + (dir / "rep").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("report written to ") != std::string::npos);
  for (const char* name : {"summary.csv", "dbfs_err_boxplot.svg", "si_sdri_boxplot.svg"})
    CHECK(fs::exists(dir / "rep" / name));
  const std::string csv = testutil::file_text(dir / "rep" / "summary.csv");
  CHECK(csv.find("baseline,") != std::string::npos);
  CHECK(csv.find("separated,") != std::string::npos);

  // Mismatched label count is a config error.
  r = run_cli(dir, "report --results " + (dir / "ev_base" / "records.jsonl").string() +
                       " --labels a b --out " + (dir / "rep2").string());
  CHECK(r.code == 2);
}
