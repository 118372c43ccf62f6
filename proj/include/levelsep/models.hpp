// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_MODELS_HPP
#define LEVELSEP_MODELS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "levelsep/autodiff.hpp"
#include "levelsep/common.hpp"
#include "levelsep/losses.hpp"

namespace levelsep::models {

// Separator: per-frame MLP over a context window of 2*radius + 1 stacked
// log-magnitude frames (edges replicated), emitting n_freq * n_classes
// sigmoid mask entries per frame.
struct SeparatorArch {
  int context_radius = 2;
  std::vector<int> hidden = {256, 256};
};

// Classifier: per-frame MLP on single log-magnitude frames; per-frame class
// logits are max-pooled over time into clip logits.
struct ClassifierArch {
  std::vector<int> hidden = {128};
};

struct TrainingMeta {
  int epochs_run = 0;
  double best_val_loss = 0.0;
  std::map<std::string, double> epsilon;  // margins used during separator training
};

// Parameters plus architecture descriptor; serializable as a single JSON
// document that round-trips byte-exactly.
struct ModelState {
  std::string kind;  // "separator" | "classifier"
  std::size_t n_freq = 0;
  std::size_t n_classes = 0;
  int context_radius = 0;  // separator only
  std::vector<int> hidden;
  std::uint64_t init_seed = 0;
  std::map<std::string, Mat> params;  // w0/b0 ... wK/bK, output layer last
  TrainingMeta meta;

  std::size_t layer_count() const { return hidden.size() + 1; }
};

ModelState init_separator(std::size_t n_freq, std::size_t n_classes, const SeparatorArch& arch,
                          std::uint64_t seed);
ModelState init_classifier(std::size_t n_freq, std::size_t n_classes, const ClassifierArch& arch,
                           std::uint64_t seed);

void save_model(const ModelState& m, const std::string& path);
ModelState load_model(const std::string& path);

// Context stacking: rows [d*F, (d+1)*F) of the result hold the input shifted
// by d - radius frames, edge frames replicated.
Mat stacked_context(const Mat& xlog, int radius);

// Plain forwards (no tape), used for evaluation and validation losses.
std::vector<Mat> forward_separator(const ModelState& m, const Mat& xlog);
std::vector<double> classifier_logits(const ModelState& m, const Mat& slog);
std::vector<double> forward_classifier(const ModelState& m, const Mat& slog);  // probabilities

// Graph forwards. Separator parameters enter as leaves (pvals); classifier
// parameters enter as constants so no gradient reaches them.
std::vector<ad::Val> separator_masks_graph(ad::Graph& g,
                                           const std::map<std::string, ad::Val>& pvals,
                                           const ModelState& m, const Mat& xlog);
ad::Val classifier_logits_graph(ad::Graph& g, const ModelState& m, ad::Val slog);

// Adapter for the losses module; the returned callable references clf, which
// must outlive it.
losses::ClassifierLogitsFn frozen_classifier_fn(const ModelState& clf);

// Classification loss value on plain forwards (mix + per-source + beta *
// background terms, summed over classes).
double cls_loss_value(const ModelState& clf, const Mat& xmag, const std::vector<Mat>& masks,
                      const std::vector<int>& y, double beta);

// alpha * mix loss + classification loss on plain forwards.
double total_loss_value(const ModelState& clf, const Mat& xmag, const std::vector<Mat>& masks,
                        const std::vector<int>& y, const losses::LossConfig& cfg);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::map<std::string, Mat> m;
  std::map<std::string, Mat> v;
  long t = 0;
};

void adam_step(std::map<std::string, Mat>& params, const std::map<std::string, Mat>& grads,
               AdamState& st, const AdamConfig& cfg);

// Scales grads in place when their global L2 norm exceeds max_norm; no-op
// when max_norm <= 0. Returns the pre-clip norm.
double clip_global_norm(std::map<std::string, Mat>& grads, double max_norm);

struct TrainConfig {
  double lr = 1e-4;
  int batch = 8;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

// One clip prepared for training: magnitude spectrogram, its rescaled
// log-magnitude, and the clip-level labels.
struct TrainClip {
  Mat xmag;
  Mat xlog;
  std::vector<int> labels;
};

struct EpochLoss {
  double train = 0.0;
  double val = 0.0;
};

struct TrainResult {
  ModelState model;
  std::vector<EpochLoss> epochs;
};

// Minimizes the summed-BCE mixture classification loss; early stopping on
// validation loss with the configured patience; returns the best-validation
// snapshot.
TrainResult train_classifier(const std::vector<TrainClip>& train,
                             const std::vector<TrainClip>& val, std::size_t n_freq,
                             std::size_t n_classes, const ClassifierArch& arch,
                             const TrainConfig& tc);

// Minimizes the combined objective with the classifier frozen. The epsilon
// margins inside loss_cfg must already be resolved to numbers.
TrainResult train_separator(const std::vector<TrainClip>& train,
                            const std::vector<TrainClip>& val, std::size_t n_freq,
                            std::size_t n_classes, const SeparatorArch& arch,
                            const TrainConfig& tc, const ModelState& classifier,
                            const losses::LossConfig& loss_cfg);

}  // namespace levelsep::models

#endif  // LEVELSEP_MODELS_HPP
