// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/losses.hpp"

#include <cmath>

namespace levelsep::losses {

double LossConfig::epsilon_for(const std::string& name) const {
  auto it = epsilon.find(name);
  return it == epsilon.end() ? 0.0 : it->second;
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) throw ConfigError("loss config: alpha must be nonnegative");
  if (beta != 0.0 && beta != 1.0) throw ConfigError("loss config: beta must be 0 or 1");
  if (!(salience_threshold > 0.0 && salience_threshold < 1.0))
    throw ConfigError("loss config: salience threshold must lie in (0, 1)");
  if (aggregation_set.specs.empty()) throw ConfigError("loss config: empty aggregation set");
  for (const auto& [name, eps] : epsilon)
    if (eps < 0.0) throw ConfigError("loss config: negative margin for " + name);
}

Salience salience_mask(const Mat& x, double threshold) {
  Salience s;
  s.frame_on.assign(x.cols, 0);
  std::vector<double> energy(x.cols, 0.0);
  for (std::size_t t = 0; t < x.cols; ++t) {
    double e = 0.0;
    for (std::size_t f = 0; f < x.rows; ++f) {
      const double m = x.at(f, t);
      e += m * m;
    }
    energy[t] = e;
  }
  double emax = 0.0;
  for (double e : energy) emax = std::max(emax, e);
  for (std::size_t t = 0; t < x.cols; ++t) {
    if (emax > 0.0 && !(energy[t] < threshold * emax)) {
      s.frame_on[t] = 1;
      ++s.n_salient;
    }
  }
  if (s.n_salient == 0) throw NumericalError("salience mask: no salient frames");
  return s;
}

Mat Salience::to_matrix(std::size_t n_freq) const {
  Mat m(n_freq, frame_on.size(), 0.0);
  for (std::size_t t = 0; t < frame_on.size(); ++t)
    if (frame_on[t])
      for (std::size_t f = 0; f < n_freq; ++f) m.at(f, t) = 1.0;
  return m;
}

Mat Salience::apply(const Mat& e) const {
  Mat out = e;
  for (std::size_t t = 0; t < out.cols; ++t)
    if (!frame_on[t])
      for (std::size_t f = 0; f < out.rows; ++f) out.at(f, t) = 0.0;
  return out;
}

std::size_t margin_bins(const tfagg::AggregationSpec& spec, std::size_t n_salient) {
  const std::size_t f_out = spec.freq_agg == tfagg::AggKind::Sum ? 1 : spec.filter_bank.n_bands;
  const std::size_t t_out = spec.time_agg == tfagg::AggKind::Sum ? 1 : n_salient;
  return f_out * t_out;
}

double l1(const Mat& e) {
  double acc = 0.0;
  for (double x : e.v) acc += std::abs(x);
  return acc;
}

double asym_l1(const Mat& e, double eps, std::size_t n_bins) {
  double pos = 0.0, neg = 0.0;
  for (double x : e.v) {
    if (x > 0.0) pos += x;
    else neg -= x;
  }
  const double margined = pos - static_cast<double>(n_bins) * eps;
  return (margined > 0.0 ? margined : 0.0) + neg;
}

Mat active_error(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y) {
  Mat e = x;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t k = 0; k < e.v.size(); ++k) e.v[k] -= masks[i].v[k] * x.v[k];
  }
  return e;
}

Mat inactive_error(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y) {
  Mat e(x.rows, x.cols, 0.0);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (y[i]) continue;
    for (std::size_t k = 0; k < e.v.size(); ++k) e.v[k] += masks[i].v[k] * x.v[k];
  }
  return e;
}

Mat residual_spectrogram(const Mat& x, const std::vector<Mat>& masks) {
  Mat r = x;
  for (std::size_t k = 0; k < r.v.size(); ++k) {
    double s = 1.0;
    for (const Mat& m : masks) s -= m.v[k];
    r.v[k] = (s > 0.0 ? s : 0.0) * x.v[k];
  }
  return r;
}

double bce(double target, double prediction) {
  if (target != 0.0 && target != 1.0) throw ConfigError("bce: target must be 0 or 1");
  return target == 1.0 ? -std::log(prediction) : -std::log1p(-prediction);
}

double bce_sum(const std::vector<int>& targets, const std::vector<double>& predictions) {
  if (targets.size() != predictions.size()) throw ConfigError("bce: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i)
    acc += bce(static_cast<double>(targets[i]), predictions[i]);
  return acc;
}

double mix_loss_sssle(const Mat& x, const std::vector<Mat>& masks, const std::vector<int>& y,
                      const LossConfig& cfg) {
  if (masks.size() != y.size()) throw ConfigError("mix loss: mask/label count mismatch");
  const Salience sal = salience_mask(x, cfg.salience_threshold);
  const Mat e_act = sal.apply(active_error(x, masks, y));
  const Mat e_inact = sal.apply(inactive_error(x, masks, y));
  bool any_inactive = false;
  for (int yi : y) any_inactive |= (yi == 0);

  double total = 0.0;
  for (const auto& spec : cfg.aggregation_set.specs) {
    const std::size_t nb = margin_bins(spec, sal.n_salient);
    const double norm = static_cast<double>(nb);
    const Mat ha = tfagg::apply_aggregation(spec, e_act);
    double term = asym_l1(ha, cfg.epsilon_for(spec.name), nb) / norm;
    if (any_inactive) {
      const Mat hi = tfagg::apply_aggregation(spec, e_inact);
      term += l1(hi) / norm;
    }
    total += term;
  }
  return total / static_cast<double>(cfg.aggregation_set.specs.size());
}

// ---- graph builders ----

ad::Val apply_aggregation_graph(ad::Graph& g, const tfagg::AggregationSpec& spec, ad::Val e) {
  ad::Val h = e;
  if (!spec.filter_bank.is_identity()) h = g.matmul(g.constant(spec.filter_bank.weights), h);
  if (spec.freq_agg == tfagg::AggKind::Sum) {
    const std::size_t rows = g.value(h).rows;
    h = g.matmul(g.constant(Mat(1, rows, 1.0)), h);
  }
  if (spec.time_agg == tfagg::AggKind::Sum) {
    const std::size_t cols = g.value(h).cols;
    h = g.matmul(h, g.constant(Mat(cols, 1, 1.0)));
  }
  return h;
}

ad::Val l1_graph(ad::Graph& g, ad::Val e) {
  return g.add(g.vsum(g.relu(e)), g.vsum(g.relu(g.neg(e))));
}

ad::Val asym_l1_graph(ad::Graph& g, ad::Val e, double eps, std::size_t n_bins) {
  ad::Val pos = g.vsum(g.relu(e));
  ad::Val neg = g.vsum(g.relu(g.neg(e)));
  ad::Val margined = g.relu(g.add_scalar(pos, -static_cast<double>(n_bins) * eps));
  return g.add(margined, neg);
}

ad::Val residual_graph(ad::Graph& g, ad::Val x, const std::vector<ad::Val>& masks) {
  const Mat& xv = g.value(x);
  ad::Val s = g.constant(Mat(xv.rows, xv.cols, 1.0));
  for (ad::Val m : masks) s = g.sub(s, m);
  return g.mul(g.relu(s), x);
}

ad::Val log_magnitude_graph(ad::Graph& g, ad::Val mag, double floor_db) {
  const Mat& mv = g.value(mag);
  double mx = 0.0;
  for (double v : mv.v) mx = std::max(mx, v);
  if (mx == 0.0) return g.constant(Mat(mv.rows, mv.cols, 0.0));
  const double span = -floor_db;
  const double to_db = 20.0 / std::log(10.0);
  ad::Val maxv = g.max_all(mag);
  ad::Val floorv = g.scale(maxv, std::pow(10.0, floor_db / 20.0));
  ad::Val clamped = g.badd(g.relu(g.bsub(mag, floorv)), floorv);
  ad::Val db = g.scale(g.vlog(clamped), to_db);
  ad::Val top = g.scale(g.vlog(maxv), to_db);
  return g.scale(g.add_scalar(g.bsub(db, top), span), 1.0 / span);
}

ad::Val mix_loss_graph(ad::Graph& g, ad::Val x, const std::vector<ad::Val>& masks,
                       const std::vector<int>& y, const LossConfig& cfg, const Salience& sal) {
  if (masks.size() != y.size()) throw ConfigError("mix loss: mask/label count mismatch");
  const Mat& xv = g.value(x);
  ad::Val xs = g.mul(x, g.constant(sal.to_matrix(xv.rows)));

  ad::Val e_act = xs;
  ad::Val e_inact{};
  bool any_inactive = false;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    ad::Val shat = g.mul(masks[i], xs);
    if (y[i]) {
      e_act = g.sub(e_act, shat);
    } else {
      e_inact = any_inactive ? g.add(e_inact, shat) : shat;
      any_inactive = true;
    }
  }

  ad::Val total = g.scalar(0.0);
  for (const auto& spec : cfg.aggregation_set.specs) {
    const std::size_t nb = margin_bins(spec, sal.n_salient);
    const double inv = 1.0 / static_cast<double>(nb);
    ad::Val ha = apply_aggregation_graph(g, spec, e_act);
    ad::Val term = g.scale(asym_l1_graph(g, ha, cfg.epsilon_for(spec.name), nb), inv);
    if (any_inactive) {
      ad::Val hi = apply_aggregation_graph(g, spec, e_inact);
      term = g.add(term, g.scale(l1_graph(g, hi), inv));
    }
    total = g.add(total, term);
  }
  return g.scale(total, 1.0 / static_cast<double>(cfg.aggregation_set.specs.size()));
}

ad::Val cls_loss_graph(ad::Graph& g, const ClassifierLogitsFn& clf, ad::Val x,
                       const std::vector<ad::Val>& masks, const std::vector<int>& y, double beta) {
  const std::size_t c = masks.size();
  Mat y_mat(c, 1, 0.0);
  for (std::size_t i = 0; i < c; ++i) y_mat.v[i] = static_cast<double>(y[i]);

  ad::Val loss = g.bce_logits_sum(clf(g, log_magnitude_graph(g, x)), y_mat);

  for (std::size_t i = 0; i < c; ++i) {
    ad::Val shat = g.mul(masks[i], x);
    Mat target(c, 1, 0.0);
    target.v[i] = static_cast<double>(y[i]);
    ad::Val logits = clf(g, log_magnitude_graph(g, shat));
    loss = g.add(loss, g.bce_logits_sum(logits, target));
  }

  if (beta != 0.0) {
    ad::Val bkgr = residual_graph(g, x, masks);
    ad::Val logits = clf(g, log_magnitude_graph(g, bkgr));
    ad::Val term = g.bce_logits_sum(logits, Mat(c, 1, 0.0));
    loss = g.add(loss, g.scale(term, beta));
  }
  return loss;
}

ad::Val total_loss_graph(ad::Graph& g, const ClassifierLogitsFn& clf, ad::Val x,
                         const std::vector<ad::Val>& masks, const std::vector<int>& y,
                         const LossConfig& cfg) {
  const Salience sal = salience_mask(g.value(x), cfg.salience_threshold);
  ad::Val mix = mix_loss_graph(g, x, masks, y, cfg, sal);
  ad::Val cls = cls_loss_graph(g, clf, x, masks, y, cfg.beta);
  return g.add(g.scale(mix, cfg.alpha), cls);
}

// ---- margin estimation ----

double estimate_epsilon_clip(const Mat& x, const Mat& active_sum,
                             const tfagg::AggregationSpec& spec, double salience_threshold) {
  if (!x.same_shape(active_sum)) throw ConfigError("epsilon estimation: shape mismatch");
  const Salience sal = salience_mask(x, salience_threshold);
  Mat e = x;
  for (std::size_t k = 0; k < e.v.size(); ++k) e.v[k] -= active_sum.v[k];
  const Mat h = tfagg::apply_aggregation(spec, sal.apply(e));
  double pos = 0.0;
  for (double v : h.v)
    if (v > 0.0) pos += v;
  return pos / static_cast<double>(margin_bins(spec, sal.n_salient));
}

double estimate_epsilon_stems(const std::vector<Mat>& xs, const std::vector<Mat>& active_sums,
                              const tfagg::AggregationSpec& spec, double salience_threshold) {
  if (xs.empty() || xs.size() != active_sums.size())
    throw ConfigError("epsilon estimation: empty or mismatched clip lists");
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    acc += estimate_epsilon_clip(xs[i], active_sums[i], spec, salience_threshold);
  return acc / static_cast<double>(xs.size());
}

double estimate_epsilon_background(const std::vector<Mat>& backgrounds,
                                   const tfagg::AggregationSpec& spec,
                                   double salience_threshold) {
  if (backgrounds.empty()) throw ConfigError("epsilon estimation: no background clips");
  double acc = 0.0;
  for (const Mat& b : backgrounds) {
    const Salience sal = salience_mask(b, salience_threshold);
    const Mat h = tfagg::apply_aggregation(spec, sal.apply(b));
    double pos = 0.0;
    for (double v : h.v)
      if (v > 0.0) pos += v;
    acc += pos / static_cast<double>(margin_bins(spec, sal.n_salient));
  }
  return acc / static_cast<double>(backgrounds.size());
}

}  // namespace levelsep::losses
