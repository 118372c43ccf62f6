// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_LOSSES_HPP
#define LEVELSEP_LOSSES_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "levelsep/autodiff.hpp"
#include "levelsep/common.hpp"
#include "levelsep/tfagg.hpp"

namespace levelsep::losses {

// Training-objective configuration. epsilon maps aggregation-spec names to
// nonnegative per-bin margins; names absent from the map get margin 0.
struct LossConfig {
  double alpha = 100.0;
  double beta = 1.0;  // weight of the residual-background classification term, in {0, 1}
  double salience_threshold = 0.01;
  tfagg::AggregationSet aggregation_set;
  std::map<std::string, double> epsilon;

  double epsilon_for(const std::string& name) const;
  void validate() const;
};

// Per-frame salience of a magnitude spectrogram: frame t is salient when its
// energy sum_f X[f,t]^2 is at least threshold * max frame energy (strictly
// smaller frames are dropped). n_salient replaces T in loss normalizers.
struct Salience {
  std::vector<std::uint8_t> frame_on;  // length T
  std::size_t n_salient = 0;

  Mat to_matrix(std::size_t n_freq) const;  // F x T, columns of ones/zeros
  Mat apply(const Mat& e) const;            // zero out non-salient columns
};

Salience salience_mask(const Mat& x, double threshold);

// Bin count used both as the loss divisor and as the margin multiplier for
// one aggregation spec: aggregated rows times (salient frames when time is
// kept, 1 when time is summed).
std::size_t margin_bins(const tfagg::AggregationSpec& spec, std::size_t n_salient);

double l1(const Mat& e);

// [ ||[E]+||_1 - n_bins * eps ]_+ + ||[-E]+||_1. Equals ||E||_1 at eps = 0;
// subdifferentiable everywhere with subgradient 0 at rectifier kinks.
double asym_l1(const Mat& e, double eps, std::size_t n_bins);

// E_active = X - sum of active masked estimates (X itself when no class is
// active); E_inactive = sum of inactive masked estimates (always >= 0).
Mat active_error(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y);
Mat inactive_error(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y);

// [1 - sum_i masks[i]]_+ applied to X.
Mat residual_spectrogram(const Mat& x, const std::vector<Mat>& masks);

// Binary cross-entropy on the probability interface; target must be exactly
// 0 or 1.
double bce(double target, double prediction);
double bce_sum(const std::vector<int>& targets, const std::vector<double>& predictions);

// Mean over the aggregation set of (asymmetric active + plain inactive)
// consistency terms, each divided by its margin_bins count.
double mix_loss_sssle(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y,
                      const LossConfig& cfg);

// ---- graph builders (all inputs/outputs live on g) ----

ad::Val apply_aggregation_graph(ad::Graph& g, const tfagg::AggregationSpec& spec, ad::Val e);
ad::Val l1_graph(ad::Graph& g, ad::Val e);
ad::Val asym_l1_graph(ad::Graph& g, ad::Val e, double eps, std::size_t n_bins);
ad::Val residual_graph(ad::Graph& g, ad::Val x, const std::vector<ad::Val>& masks);

// Differentiable counterpart of dsp::log_magnitude_of: floor at
// max * 10^(floor_db/20), convert to dB, rescale to [0, 1]. An all-zero
// input yields a zero constant.
ad::Val log_magnitude_graph(ad::Graph& g, ad::Val mag, double floor_db = -80.0);

ad::Val mix_loss_graph(ad::Graph& g, ad::Val x, const std::vector<ad::Val>& masks,
                       const std::vector<int>& y, const LossConfig& cfg, const Salience& sal);

// Classifier hook: maps a log-magnitude input to C x 1 clip logits.
using ClassifierLogitsFn = std::function<ad::Val(ad::Graph&, ad::Val)>;

// L_cls-mix + sum_i L_cls-mix,i + beta * L_cls-bkgr, every term summed over
// classes and computed from logits.
ad::Val cls_loss_graph(ad::Graph& g, const ClassifierLogitsFn& clf, ad::Val x,
                       const std::vector<ad::Val>& masks, const std::vector<int>& y, double beta);

// alpha * mix loss + classification loss.
ad::Val total_loss_graph(ad::Graph& g, const ClassifierLogitsFn& clf, ad::Val x,
                         const std::vector<ad::Val>& masks, const std::vector<int>& y,
                         const LossConfig& cfg);

// ---- margin estimation from spectrogram magnitudes ----

// One clip's positive consistency residual per aggregated bin, where
// active_sum is the summed magnitude spectrogram of the clip's active stems.
double estimate_epsilon_clip(const Mat& x, const Mat& active_sum,
                             const tfagg::AggregationSpec& spec, double salience_threshold);

// Mean of estimate_epsilon_clip over a training set.
double estimate_epsilon_stems(const std::vector<Mat>& xs, const std::vector<Mat>& active_sums,
                              const tfagg::AggregationSpec& spec, double salience_threshold);

// Fallback when no stems exist: mean aggregated energy per bin over
// background-only reference clips.
double estimate_epsilon_background(const std::vector<Mat>& backgrounds,
                                   const tfagg::AggregationSpec& spec, double salience_threshold);

}  // namespace levelsep::losses

#endif  // LEVELSEP_LOSSES_HPP
