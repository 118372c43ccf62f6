// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "levelsep/models.hpp"
#include "levelsep/tfagg.hpp"
#include "test_util.hpp"

using namespace levelsep;
using testutil::random_mat;
using testutil::scratch_dir;

namespace {

models::SeparatorArch tiny_separator() {
  models::SeparatorArch a;
  a.context_radius = 1;
  a.hidden = {8};
  return a;
}

models::ClassifierArch tiny_classifier() {
  models::ClassifierArch a;
  a.hidden = {8};
  return a;
}

// Two-class toy: class 0 lives in the low half of the bins, class 1 in the
// high half. Linearly separable from single frames.
std::vector<models::TrainClip> band_clips(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<models::TrainClip> clips;
  const std::size_t f = 8, t = 6;
  for (std::size_t k = 0; k < n; ++k) {
    models::TrainClip clip;
    clip.labels = {static_cast<int>(k % 2 == 0 || k % 3 == 0),
                   static_cast<int>(k % 2 == 1 || k % 3 == 0)};
    Mat x(f, t, 0.0);
    for (std::size_t r = 0; r < f; ++r)
      for (std::size_t c = 0; c < t; ++c) {
        const bool low = r < f / 2;
        const bool active = (low && clip.labels[0]) || (!low && clip.labels[1]);
        x.at(r, c) = active ? uniform(rng, 0.7, 1.0) : uniform(rng, 0.0, 0.05);
      }
    clip.xmag = x;
    clip.xlog = x;  // already in [0, 1]; fine as classifier input
    clips.push_back(std::move(clip));
  }
  return clips;
}

losses::LossConfig tiny_loss_config(const std::vector<std::string>& names) {
  losses::LossConfig cfg;
  cfg.aggregation_set = tfagg::set_by_names(names, tfagg::mel_filterbank(14, 3, 16000),
                                            tfagg::linear_filterbank(14));
  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  cfg.salience_threshold = 0.01;
  return cfg;
}

}  // namespace

TEST_CASE("separator initialization: shapes, zero biases, bounded weights") {
  const auto m = models::init_separator(16, 3, tiny_separator(), 7);
  CHECK(m.kind == "separator");
  CHECK(m.layer_count() == 2);
  REQUIRE(m.params.count("w0") == 1);
  REQUIRE(m.params.count("w1") == 1);
  const Mat& w0 = m.params.at("w0");
  const Mat& w1 = m.params.at("w1");
  CHECK(w0.rows == 8);
  CHECK(w0.cols == 16 * 3);  // context span 2*1+1
  CHECK(w1.rows == 16 * 3);  // per-class mask rows
  CHECK(w1.cols == 8);
  const double lim0 = std::sqrt(6.0 / (48.0 + 8.0));
  for (double x : w0.v) CHECK(std::abs(x) <= lim0);
  for (double x : m.params.at("b0").v) CHECK(x == 0.0);
  for (double x : m.params.at("b1").v) CHECK(x == 0.0);

  const auto same = models::init_separator(16, 3, tiny_separator(), 7);
  CHECK(same.params.at("w0").v == w0.v);
  const auto other = models::init_separator(16, 3, tiny_separator(), 8);
  CHECK(other.params.at("w0").v != w0.v);
}

TEST_CASE("classifier initialization shapes") {
  const auto m = models::init_classifier(16, 5, tiny_classifier(), 3);
  CHECK(m.kind == "classifier");
  CHECK(m.context_radius == 0);
  CHECK(m.params.at("w0").rows == 8);
  CHECK(m.params.at("w0").cols == 16);
  CHECK(m.params.at("w1").rows == 5);
  CHECK(m.params.at("w1").cols == 8);
}

TEST_CASE("model save/load/save round trip is byte-identical") {
  const auto dir = scratch_dir("models_rt");
  auto m = models::init_separator(12, 2, tiny_separator(), 99);
  m.meta.epochs_run = 4;
  m.meta.best_val_loss = 0.125;
  m.meta.epsilon = {{"tf-mel", 0.01}, {"global", 2.5}};
  const auto p1 = (dir / "m1.json").string();
  const auto p2 = (dir / "m2.json").string();
  models::save_model(m, p1);
  const auto loaded = models::load_model(p1);
  CHECK(loaded.kind == m.kind);
  CHECK(loaded.n_freq == m.n_freq);
  CHECK(loaded.hidden == m.hidden);
  CHECK(loaded.init_seed == m.init_seed);
  CHECK(loaded.meta.epochs_run == 4);
  CHECK(loaded.meta.epsilon.at("global") == 2.5);
  CHECK(loaded.params.at("w0").v == m.params.at("w0").v);
  models::save_model(loaded, p2);
  CHECK(testutil::files_identical(p1, p2));
}

TEST_CASE("model loading rejects junk and inconsistent shapes") {
  const auto dir = scratch_dir("models_bad");
  const auto junk = (dir / "junk.json").string();
  std::ofstream(junk) << "{ not json";
  CHECK_THROWS_AS(models::load_model(junk), IoError);
  CHECK_THROWS_AS(models::load_model((dir / "missing.json").string()), IoError);

  auto m = models::init_classifier(8, 2, tiny_classifier(), 1);
  m.params.at("w0") = Mat(3, 3, 0.0);  // wrong shape
  const auto bad = (dir / "bad.json").string();
  models::save_model(m, bad);
  CHECK_THROWS_AS(models::load_model(bad), ConfigError);
}

TEST_CASE("context stacking replicates edges") {
  Mat x(2, 3);
  // columns a, b, c
  x.v = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const Mat s = models::stacked_context(x, 1);
  REQUIRE(s.rows == 6);
  REQUIRE(s.cols == 3);
  // shift -1 block: [a a b]
  CHECK(s.at(0, 0) == 1.0);
  CHECK(s.at(0, 1) == 1.0);
  CHECK(s.at(0, 2) == 2.0);
  CHECK(s.at(1, 0) == 4.0);
  // center block equals the input
  CHECK(s.at(2, 0) == 1.0);
  CHECK(s.at(3, 2) == 6.0);
  // shift +1 block: [b c c]
  CHECK(s.at(4, 0) == 2.0);
  CHECK(s.at(4, 2) == 3.0);
  CHECK(s.at(5, 2) == 6.0);

  const Mat same = models::stacked_context(x, 0);
  CHECK(same.v == x.v);
  CHECK_THROWS_AS(models::stacked_context(x, -1), ConfigError);
}

TEST_CASE("separator masks lie strictly inside (0, 1) and match the graph forward") {
  std::mt19937_64 rng(41);
  const auto m = models::init_separator(16, 3, tiny_separator(), 11);
  const Mat xlog = random_mat(16, 9, rng);
  const auto masks = models::forward_separator(m, xlog);
  REQUIRE(masks.size() == 3);
  for (const Mat& mask : masks) {
    CHECK(mask.rows == 16);
    CHECK(mask.cols == 9);
    for (double v : mask.v) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }

  ad::Graph g;
  std::map<std::string, ad::Val> pvals;
  for (const auto& [name, p] : m.params) pvals[name] = g.leaf(p, true);
  const auto gm = models::separator_masks_graph(g, pvals, m, xlog);
  REQUIRE(gm.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Mat& v = g.value(gm[i]);
    for (std::size_t k = 0; k < v.size(); ++k)
      CHECK(v.v[k] == doctest::Approx(masks[i].v[k]).epsilon(1e-12));
  }
}

TEST_CASE("classifier forward matches its graph twin and rejects misuse") {
  std::mt19937_64 rng(42);
  const auto m = models::init_classifier(16, 4, tiny_classifier(), 5);
  const Mat xlog = random_mat(16, 7, rng);
  const auto logits = models::classifier_logits(m, xlog);
  REQUIRE(logits.size() == 4);

  ad::Graph g;
  const Mat& gl = g.value(models::classifier_logits_graph(g, m, g.constant(xlog)));
  REQUIRE(gl.rows == 4);
  REQUIRE(gl.cols == 1);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(gl.v[i] == doctest::Approx(logits[i]).epsilon(1e-12));

  const auto probs = models::forward_classifier(m, xlog);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(probs[i] == doctest::Approx(1.0 / (1.0 + std::exp(-logits[i]))).epsilon(1e-12));

  CHECK_THROWS_AS(models::classifier_logits(m, random_mat(9, 7, rng)), ConfigError);
  const auto sep = models::init_separator(16, 2, tiny_separator(), 1);
  CHECK_THROWS_AS(models::classifier_logits(sep, xlog), ConfigError);
  CHECK_THROWS_AS(models::forward_separator(m, xlog), ConfigError);
}

TEST_CASE("clip logits are invariant to duplicating frames") {
  std::mt19937_64 rng(43);
  const auto m = models::init_classifier(12, 3, tiny_classifier(), 9);
  const Mat x = random_mat(12, 5, rng);
  Mat doubled(12, 10);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 10; ++c) doubled.at(r, c) = x.at(r, c % 5);
  const auto a = models::classifier_logits(m, x);
  const auto b = models::classifier_logits(m, doubled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("adam: zero gradients leave parameters untouched") {
  std::map<std::string, Mat> params{{"x", Mat(2, 2, 1.5)}};
  std::map<std::string, Mat> grads{{"x", Mat(2, 2, 0.0)}};
  models::AdamState st;
  models::AdamConfig cfg;
  adam_step(params, grads, st, cfg);
  for (double v : params.at("x").v) CHECK(v == 1.5);
  CHECK(st.t == 1);
}

TEST_CASE("adam: first step moves by about lr in the sign direction") {
  std::map<std::string, Mat> params{{"x", Mat(1, 3, 0.0)}};
  Mat g(1, 3);
  g.v = {2.0, -0.5, 1e-3};
  std::map<std::string, Mat> grads{{"x", g}};
  models::AdamState st;
  models::AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, grads, st, cfg);
  CHECK(params.at("x").v[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(params.at("x").v[1] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(params.at("x").v[2] == doctest::Approx(-0.01).epsilon(1e-4));
}

TEST_CASE("adam rejects missing or mis-shaped gradients") {
  std::map<std::string, Mat> params{{"x", Mat(2, 2, 0.0)}};
  models::AdamState st;
  models::AdamConfig cfg;
  std::map<std::string, Mat> none;
  CHECK_THROWS_AS(adam_step(params, none, st, cfg), ConfigError);
  std::map<std::string, Mat> wrong{{"x", Mat(1, 1, 0.0)}};
  CHECK_THROWS_AS(adam_step(params, wrong, st, cfg), ConfigError);
}

TEST_CASE("adam drives a quadratic bowl to the bottom") {
  std::map<std::string, Mat> params{{"x", Mat(3, 1, 0.0)}};
  params.at("x").v = {1.0, -2.0, 0.5};
  models::AdamState st;
  models::AdamConfig cfg;
  cfg.lr = 0.05;
  for (int step = 0; step < 5000; ++step) {
    Mat g(3, 1);
    for (int i = 0; i < 3; ++i) g.v[i] = 2.0 * params.at("x").v[i];
    std::map<std::string, Mat> grads{{"x", g}};
    adam_step(params, grads, st, cfg);
  }
  double f = 0.0;
  for (double v : params.at("x").v) f += v * v;
  CHECK(f < 1e-6);
}

TEST_CASE("global-norm clipping") {
  std::map<std::string, Mat> grads{{"a", Mat(1, 1, 3.0)}, {"b", Mat(1, 1, 4.0)}};
  CHECK(models::clip_global_norm(grads, 1.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(grads.at("a").v[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(grads.at("b").v[0] == doctest::Approx(0.8).epsilon(1e-12));

  std::map<std::string, Mat> loose{{"a", Mat(1, 1, 3.0)}, {"b", Mat(1, 1, 4.0)}};
  CHECK(models::clip_global_norm(loose, 10.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(loose.at("a").v[0] == 3.0);

  std::map<std::string, Mat> off{{"a", Mat(1, 1, 3.0)}, {"b", Mat(1, 1, 4.0)}};
  CHECK(models::clip_global_norm(off, 0.0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(off.at("a").v[0] == 3.0);
}

TEST_CASE("classifier training separates a banded toy set") {
  const auto train = band_clips(40, 100);
  const auto val = band_clips(10, 200);
  models::TrainConfig tc;
  tc.lr = 0.05;
  tc.batch = 4;
  tc.max_epochs = 10;
  tc.patience = 10;
  tc.seed = 5;
  const auto result = models::train_classifier(train, val, 8, 2, tiny_classifier(), tc);
  CHECK(result.epochs.size() <= 10);
  CHECK(result.model.meta.epochs_run == static_cast<int>(result.epochs.size()));

  std::size_t correct = 0, total = 0;
  for (const auto& clip : train) {
    const auto p = models::forward_classifier(result.model, clip.xlog);
    for (std::size_t i = 0; i < p.size(); ++i) {
      correct += (p[i] > 0.5) == (clip.labels[i] == 1);
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.95);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  const auto dir = scratch_dir("models_det");
  const auto train = band_clips(12, 300);
  const auto val = band_clips(4, 301);
  models::TrainConfig tc;
  tc.lr = 0.02;
  tc.batch = 4;
  tc.max_epochs = 3;
  tc.patience = 3;
  tc.seed = 17;
  const auto r1 = models::train_classifier(train, val, 8, 2, tiny_classifier(), tc);
  const auto r2 = models::train_classifier(train, val, 8, 2, tiny_classifier(), tc);
  const auto p1 = (dir / "c1.json").string();
  const auto p2 = (dir / "c2.json").string();
  models::save_model(r1.model, p1);
  models::save_model(r2.model, p2);
  CHECK(testutil::files_identical(p1, p2));
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].train == r2.epochs[i].train);
    CHECK(r1.epochs[i].val == r2.epochs[i].val);
  }

  models::TrainConfig other = tc;
  other.seed = 18;
  const auto r3 = models::train_classifier(train, val, 8, 2, tiny_classifier(), other);
  const auto p3 = (dir / "c3.json").string();
  models::save_model(r3.model, p3);
  CHECK_FALSE(testutil::files_identical(p1, p3));
}

TEST_CASE("early stopping honors the patience budget") {
  const auto train = band_clips(12, 400);
  const auto val = band_clips(4, 401);
  models::TrainConfig tc;
  tc.lr = 0.05;
  tc.batch = 4;
  tc.max_epochs = 40;
  tc.patience = 2;
  tc.seed = 23;
  const auto result = models::train_classifier(train, val, 8, 2, tiny_classifier(), tc);
  REQUIRE(!result.epochs.empty());
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.epochs.size(); ++i)
    if (result.epochs[i].val < result.epochs[best].val) best = i;
  CHECK(result.epochs.size() <= best + 1 + 2);  // no more than patience epochs past the best
  CHECK(result.model.meta.best_val_loss == result.epochs[best].val);
}

TEST_CASE("training rejects empty splits and label mismatches") {
  const auto clips = band_clips(4, 500);
  models::TrainConfig tc;
  CHECK_THROWS_AS(models::train_classifier({}, clips, 8, 2, tiny_classifier(), tc), ConfigError);
  CHECK_THROWS_AS(models::train_classifier(clips, {}, 8, 2, tiny_classifier(), tc), ConfigError);
  CHECK_THROWS_AS(models::train_classifier(clips, clips, 8, 3, tiny_classifier(), tc),
                  ConfigError);
}

TEST_CASE("separator training runs, records margins, and respects the frozen classifier") {
  const auto train = band_clips(8, 600);
  const auto val = band_clips(3, 601);
  models::TrainConfig ctc;
  ctc.lr = 0.05;
  ctc.batch = 4;
  ctc.max_epochs = 5;
  ctc.patience = 5;
  ctc.seed = 31;
  const auto clf = models::train_classifier(train, val, 8, 2, tiny_classifier(), ctc).model;
  const auto clf_w0 = clf.params.at("w0").v;

  auto cfg = tiny_loss_config({"tf-mel", "global"});
  cfg.epsilon["tf-mel"] = 0.001;
  cfg.epsilon["global"] = 0.5;
  models::TrainConfig stc;
  stc.lr = 0.01;
  stc.batch = 4;
  stc.max_epochs = 2;
  stc.patience = 2;
  stc.seed = 32;
  const auto run = models::train_separator(train, val, 8, 2, tiny_separator(), stc, clf, cfg);
  CHECK(run.model.kind == "separator");
  CHECK(run.epochs.size() >= 1);
  CHECK(run.model.meta.epsilon.at("tf-mel") == 0.001);
  CHECK(run.model.meta.epsilon.at("global") == 0.5);
  CHECK(clf.params.at("w0").v == clf_w0);

  // Mismatched companion models are rejected.
  const auto wrong_classes = models::init_classifier(8, 3, tiny_classifier(), 1);
  CHECK_THROWS_AS(
      models::train_separator(train, val, 8, 2, tiny_separator(), stc, wrong_classes, cfg),
      ConfigError);
  CHECK_THROWS_AS(models::train_separator(train, val, 8, 2, tiny_separator(), stc,
                                          models::init_separator(8, 2, tiny_separator(), 1), cfg),
                  ConfigError);
}

TEST_CASE("separator training loss decreases on a learnable toy") {
  const auto train = band_clips(10, 700);
  const auto val = band_clips(4, 701);
  models::TrainConfig ctc;
  ctc.lr = 0.05;
  ctc.batch = 4;
  ctc.max_epochs = 8;
  ctc.patience = 8;
  ctc.seed = 41;
  const auto clf = models::train_classifier(train, val, 8, 2, tiny_classifier(), ctc).model;

  auto cfg = tiny_loss_config({"tf-mel", "spectrum-mel", "global"});
  models::TrainConfig stc;
  stc.lr = 0.02;
  stc.batch = 4;
  stc.max_epochs = 6;
  stc.patience = 6;
  stc.seed = 42;
  const auto run = models::train_separator(train, val, 8, 2, tiny_separator(), stc, clf, cfg);
  REQUIRE(run.epochs.size() >= 2);
  CHECK(run.epochs.back().train < run.epochs.front().train);
}

TEST_CASE("with the consistency weight at zero, the aggregation choice cannot matter") {
  const auto train = band_clips(8, 800);
  const auto val = band_clips(3, 801);
  models::TrainConfig ctc;
  ctc.lr = 0.05;
  ctc.batch = 4;
  ctc.max_epochs = 3;
  ctc.patience = 3;
  ctc.seed = 51;
  const auto clf = models::train_classifier(train, val, 8, 2, tiny_classifier(), ctc).model;

  models::TrainConfig stc;
  stc.lr = 0.01;
  stc.batch = 4;
  stc.max_epochs = 2;
  stc.patience = 2;
  stc.seed = 52;

  auto cfg_a = tiny_loss_config({"tf-mel"});
  cfg_a.alpha = 0.0;
  auto cfg_b = tiny_loss_config({"global", "spectrum-linear"});
  cfg_b.alpha = 0.0;
  cfg_b.epsilon["global"] = 3.0;

  const auto ra = models::train_separator(train, val, 8, 2, tiny_separator(), stc, clf, cfg_a);
  const auto rb = models::train_separator(train, val, 8, 2, tiny_separator(), stc, clf, cfg_b);
  const auto dir = scratch_dir("models_alpha0");
  const auto pa = (dir / "a.json").string();
  const auto pb = (dir / "b.json").string();
  auto ma = ra.model;
  auto mb = rb.model;
  ma.meta.epsilon.clear();  // margins differ by construction; parameters must not
  mb.meta.epsilon.clear();
  models::save_model(ma, pa);
  models::save_model(mb, pb);
  CHECK(testutil::files_identical(pa, pb));
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i)
    CHECK(ra.epochs[i].train == rb.epochs[i].train);
}

TEST_CASE("plain total loss equals the graph objective used in training") {
  std::mt19937_64 rng(61);
  const auto clf = models::init_classifier(8, 2, tiny_classifier(), 71);
  const auto sep = models::init_separator(8, 2, tiny_separator(), 72);
  auto cfg = tiny_loss_config({"tf-mel", "global"});
  cfg.alpha = 3.0;
  cfg.epsilon["global"] = 0.25;

  const Mat xmag = random_mat(8, 6, rng, 0.05, 1.0);
  const Mat xlog = random_mat(8, 6, rng);
  const std::vector<int> y = {1, 0};

  const auto masks = models::forward_separator(sep, xlog);
  const double plain = models::total_loss_value(clf, xmag, masks, y, cfg);

  ad::Graph g;
  std::map<std::string, ad::Val> pvals;
  for (const auto& [name, p] : sep.params) pvals[name] = g.leaf(p, true);
  const auto gmasks = models::separator_masks_graph(g, pvals, sep, xlog);
  ad::Val loss = losses::total_loss_graph(g, models::frozen_classifier_fn(clf),
                                          g.constant(xmag), gmasks, y, cfg);
  CHECK(g.value(loss).v[0] == doctest::Approx(plain).epsilon(1e-10));
}
