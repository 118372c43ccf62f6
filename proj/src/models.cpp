// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "levelsep/dsp.hpp"

namespace levelsep::models {

namespace {

// Layer parameter names are single-digit indexed so the sorted JSON key
// order equals the layer order.
constexpr std::size_t kMaxLayers = 10;

std::string wname(std::size_t k) { return "w" + std::to_string(k); }
std::string bname(std::size_t k) { return "b" + std::to_string(k); }

double stable_sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double bce_logit(double target, double z) {
  return std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
}

std::vector<std::size_t> layer_dims(const ModelState& m) {
  std::size_t in = m.kind == "separator"
                       ? m.n_freq * static_cast<std::size_t>(2 * m.context_radius + 1)
                       : m.n_freq;
  std::size_t out = m.kind == "separator" ? m.n_freq * m.n_classes : m.n_classes;
  std::vector<std::size_t> dims;
  dims.push_back(in);
  for (int h : m.hidden) dims.push_back(static_cast<std::size_t>(h));
  dims.push_back(out);
  return dims;
}

void init_params(ModelState& m) {
  if (m.layer_count() > kMaxLayers) throw ConfigError("model: at most 9 hidden layers");
  for (int h : m.hidden)
    if (h <= 0) throw ConfigError("model: hidden widths must be positive");
  std::mt19937_64 rng(m.init_seed);
  const auto dims = layer_dims(m);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::size_t fan_in = dims[k], fan_out = dims[k + 1];
    const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (double& x : w.v) x = uniform(rng, -lim, lim);
    m.params[wname(k)] = std::move(w);
    m.params[bname(k)] = Mat(fan_out, 1, 0.0);
  }
}

void check_arch(const ModelState& m) {
  if (m.kind != "separator" && m.kind != "classifier")
    throw ConfigError("model: unknown kind '" + m.kind + "'");
  if (m.n_freq == 0 || m.n_classes == 0) throw ConfigError("model: zero dimensions");
  if (m.context_radius < 0) throw ConfigError("model: negative context radius");
  const auto dims = layer_dims(m);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    auto wi = m.params.find(wname(k));
    auto bi = m.params.find(bname(k));
    if (wi == m.params.end() || bi == m.params.end())
      throw ConfigError("model: missing parameters for layer " + std::to_string(k));
    if (wi->second.rows != dims[k + 1] || wi->second.cols != dims[k])
      throw ConfigError("model: weight shape mismatch at layer " + std::to_string(k));
    if (bi->second.rows != dims[k + 1] || bi->second.cols != 1)
      throw ConfigError("model: bias shape mismatch at layer " + std::to_string(k));
  }
}

// Returns the final pre-activation of the MLP (relu on all layers but the
// last, column-broadcast biases).
Mat mlp_plain(const ModelState& m, const Mat& in) {
  Mat h = in;
  const std::size_t layers = m.layer_count();
  for (std::size_t k = 0; k < layers; ++k) {
    const Mat& w = m.params.at(wname(k));
    const Mat& b = m.params.at(bname(k));
    Mat z = matmul(w, h);
    for (std::size_t r = 0; r < z.rows; ++r)
      for (std::size_t c = 0; c < z.cols; ++c) z.at(r, c) += b.v[r];
    if (k + 1 < layers)
      for (double& x : z.v) x = x > 0.0 ? x : 0.0;
    h = std::move(z);
  }
  return h;
}

ad::Val mlp_graph(ad::Graph& g, const std::map<std::string, ad::Val>& pvals,
                  std::size_t layers, ad::Val in) {
  ad::Val h = in;
  for (std::size_t k = 0; k < layers; ++k) {
    ad::Val z = g.add_colvec(g.matmul(pvals.at(wname(k)), h), pvals.at(bname(k)));
    h = (k + 1 < layers) ? g.relu(z) : z;
  }
  return h;
}

void check_finite(const std::map<std::string, Mat>& params) {
  for (const auto& [name, p] : params)
    for (double x : p.v)
      if (!std::isfinite(x)) throw NumericalError("non-finite parameter in " + name);
}

}  // namespace

ModelState init_separator(std::size_t n_freq, std::size_t n_classes, const SeparatorArch& arch,
                          std::uint64_t seed) {
  ModelState m;
  m.kind = "separator";
  m.n_freq = n_freq;
  m.n_classes = n_classes;
  m.context_radius = arch.context_radius;
  m.hidden = arch.hidden;
  m.init_seed = seed;
  if (arch.context_radius < 0) throw ConfigError("model: negative context radius");
  init_params(m);
  return m;
}

ModelState init_classifier(std::size_t n_freq, std::size_t n_classes, const ClassifierArch& arch,
                           std::uint64_t seed) {
  ModelState m;
  m.kind = "classifier";
  m.n_freq = n_freq;
  m.n_classes = n_classes;
  m.context_radius = 0;
  m.hidden = arch.hidden;
  m.init_seed = seed;
  init_params(m);
  return m;
}

void save_model(const ModelState& m, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["arch"] = {{"kind", m.kind},
               {"n_freq", m.n_freq},
               {"n_classes", m.n_classes},
               {"context_radius", m.context_radius},
               {"hidden", m.hidden}};
  j["init_seed"] = m.init_seed;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : m.params) {
    params[name] = {{"shape", {p.rows, p.cols}}, {"values", p.v}};
  }
  j["params"] = std::move(params);
  j["training_meta"] = {{"epochs_run", m.meta.epochs_run},
                        {"best_val_loss", m.meta.best_val_loss},
                        {"epsilon", m.meta.epsilon}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  out << j.dump(1, '\t') << "\n";
  if (!out) throw IoError("failed writing model file: " + path);
}

ModelState load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model file " + path + ": " + e.what());
  }
  ModelState m;
  try {
    if (j.at("version").get<int>() != 1) throw ConfigError("model: unsupported version");
    const auto& arch = j.at("arch");
    m.kind = arch.at("kind").get<std::string>();
    m.n_freq = arch.at("n_freq").get<std::size_t>();
    m.n_classes = arch.at("n_classes").get<std::size_t>();
    m.context_radius = arch.at("context_radius").get<int>();
    m.hidden = arch.at("hidden").get<std::vector<int>>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    for (const auto& [name, pj] : j.at("params").items()) {
      const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ConfigError("model: parameter shape must be 2-D");
      Mat p(shape[0], shape[1]);
      const auto values = pj.at("values").get<std::vector<double>>();
      if (values.size() != p.v.size())
        throw ConfigError("model: value count mismatch for " + name);
      p.v = values;
      m.params[name] = std::move(p);
    }
    const auto& meta = j.at("training_meta");
    m.meta.epochs_run = meta.at("epochs_run").get<int>();
    m.meta.best_val_loss = meta.at("best_val_loss").get<double>();
    m.meta.epsilon = meta.at("epsilon").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed model file " + path + ": " + e.what());
  }
  check_arch(m);
  return m;
}

Mat stacked_context(const Mat& xlog, int radius) {
  if (radius < 0) throw ConfigError("context stacking: negative radius");
  const std::size_t f = xlog.rows, t = xlog.cols;
  const std::size_t span = static_cast<std::size_t>(2 * radius + 1);
  Mat out(f * span, t);
  for (std::size_t d = 0; d < span; ++d) {
    const int off = static_cast<int>(d) - radius;
    for (std::size_t c = 0; c < t; ++c) {
      const long src_l = std::clamp<long>(static_cast<long>(c) + off, 0, static_cast<long>(t) - 1);
      const std::size_t src = static_cast<std::size_t>(src_l);
      for (std::size_t r = 0; r < f; ++r) out.at(d * f + r, c) = xlog.at(r, src);
    }
  }
  return out;
}

std::vector<Mat> forward_separator(const ModelState& m, const Mat& xlog) {
  if (m.kind != "separator") throw ConfigError("forward_separator: not a separator model");
  if (xlog.rows != m.n_freq) throw ConfigError("forward_separator: frequency-bin mismatch");
  Mat z = mlp_plain(m, stacked_context(xlog, m.context_radius));
  for (double& x : z.v) x = stable_sigmoid(x);
  std::vector<Mat> masks;
  masks.reserve(m.n_classes);
  for (std::size_t i = 0; i < m.n_classes; ++i) {
    Mat mi(m.n_freq, z.cols);
    for (std::size_t r = 0; r < m.n_freq; ++r)
      for (std::size_t c = 0; c < z.cols; ++c) mi.at(r, c) = z.at(i * m.n_freq + r, c);
    masks.push_back(std::move(mi));
  }
  return masks;
}

std::vector<double> classifier_logits(const ModelState& m, const Mat& slog) {
  if (m.kind != "classifier") throw ConfigError("classifier_logits: not a classifier model");
  if (slog.rows != m.n_freq) throw ConfigError("classifier_logits: frequency-bin mismatch");
  Mat z = mlp_plain(m, slog);
  std::vector<double> logits(m.n_classes);
  for (std::size_t i = 0; i < m.n_classes; ++i) {
    double mx = z.at(i, 0);
    for (std::size_t c = 1; c < z.cols; ++c) mx = std::max(mx, z.at(i, c));
    logits[i] = mx;
  }
  return logits;
}

std::vector<double> forward_classifier(const ModelState& m, const Mat& slog) {
  std::vector<double> p = classifier_logits(m, slog);
  for (double& x : p) x = stable_sigmoid(x);
  return p;
}

std::vector<ad::Val> separator_masks_graph(ad::Graph& g,
                                           const std::map<std::string, ad::Val>& pvals,
                                           const ModelState& m, const Mat& xlog) {
  ad::Val in = g.constant(stacked_context(xlog, m.context_radius));
  ad::Val sig = g.sigmoid(mlp_graph(g, pvals, m.layer_count(), in));
  std::vector<ad::Val> masks;
  masks.reserve(m.n_classes);
  for (std::size_t i = 0; i < m.n_classes; ++i)
    masks.push_back(g.slice_rows(sig, i * m.n_freq, m.n_freq));
  return masks;
}

ad::Val classifier_logits_graph(ad::Graph& g, const ModelState& m, ad::Val slog) {
  std::map<std::string, ad::Val> pvals;
  for (const auto& [name, p] : m.params) pvals[name] = g.constant(p);
  return g.max_cols(mlp_graph(g, pvals, m.layer_count(), slog));
}

losses::ClassifierLogitsFn frozen_classifier_fn(const ModelState& clf) {
  return [&clf](ad::Graph& g, ad::Val slog) { return classifier_logits_graph(g, clf, slog); };
}

double cls_loss_value(const ModelState& clf, const Mat& xmag, const std::vector<Mat>& masks,
                      const std::vector<int>& y, double beta) {
  const std::size_t c = masks.size();
  if (y.size() != c || clf.n_classes != c) throw ConfigError("cls loss: class-count mismatch");
  double loss = 0.0;
  const std::vector<double> zmix = classifier_logits(clf, dsp::log_magnitude_of(xmag));
  for (std::size_t i = 0; i < c; ++i) loss += bce_logit(static_cast<double>(y[i]), zmix[i]);
  for (std::size_t i = 0; i < c; ++i) {
    Mat smag = xmag;
    for (std::size_t k = 0; k < smag.v.size(); ++k) smag.v[k] *= masks[i].v[k];
    const std::vector<double> z = classifier_logits(clf, dsp::log_magnitude_of(smag));
    for (std::size_t jx = 0; jx < c; ++jx)
      loss += bce_logit(jx == i ? static_cast<double>(y[i]) : 0.0, z[jx]);
  }
  if (beta != 0.0) {
    const Mat r = losses::residual_spectrogram(xmag, masks);
    const std::vector<double> z = classifier_logits(clf, dsp::log_magnitude_of(r));
    double term = 0.0;
    for (std::size_t jx = 0; jx < c; ++jx) term += bce_logit(0.0, z[jx]);
    loss += beta * term;
  }
  return loss;
}

double total_loss_value(const ModelState& clf, const Mat& xmag, const std::vector<Mat>& masks,
                        const std::vector<int>& y, const losses::LossConfig& cfg) {
  return cfg.alpha * losses::mix_loss_sssle(xmag, masks, y, cfg) +
         cls_loss_value(clf, xmag, masks, y, cfg.beta);
}

void adam_step(std::map<std::string, Mat>& params, const std::map<std::string, Mat>& grads,
               AdamState& st, const AdamConfig& cfg) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (auto& [name, p] : params) {
    const auto gi = grads.find(name);
    if (gi == grads.end()) throw ConfigError("adam: missing gradient for " + name);
    const Mat& g = gi->second;
    if (!g.same_shape(p)) throw ConfigError("adam: gradient shape mismatch for " + name);
    Mat& m = st.m.try_emplace(name, p.rows, p.cols, 0.0).first->second;
    Mat& v = st.v.try_emplace(name, p.rows, p.cols, 0.0).first->second;
    for (std::size_t k = 0; k < p.v.size(); ++k) {
      m.v[k] = cfg.beta1 * m.v[k] + (1.0 - cfg.beta1) * g.v[k];
      v.v[k] = cfg.beta2 * v.v[k] + (1.0 - cfg.beta2) * g.v[k] * g.v[k];
      const double mhat = m.v[k] / bc1;
      const double vhat = v.v[k] / bc2;
      p.v[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double clip_global_norm(std::map<std::string, Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.v) x *= k;
  }
  return norm;
}

namespace {

// Shared early-stopping scaffold: per-clip loss graph builder supplied by the
// caller; batch gradients averaged in shuffled clip order.
struct EpochDriver {
  const std::vector<TrainClip>& train;
  const std::vector<TrainClip>& val;
  const TrainConfig& tc;

  template <class BuildLoss, class ValLoss>
  TrainResult run(ModelState state, BuildLoss&& build_loss, ValLoss&& val_loss) {
    if (train.empty()) throw ConfigError("training: empty training set");
    if (val.empty()) throw ConfigError("training: empty validation set");

    AdamConfig ac;
    ac.lr = tc.lr;
    AdamState ast;
    std::mt19937_64 rng(tc.seed);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    ModelState best = state;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
      deterministic_shuffle(order, rng);
      double train_loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(tc.batch)) {
        const std::size_t stop =
            std::min(order.size(), start + static_cast<std::size_t>(tc.batch));
        std::map<std::string, Mat> grads;
        for (const auto& [name, p] : state.params) grads.emplace(name, Mat(p.rows, p.cols, 0.0));
        for (std::size_t k = start; k < stop; ++k) {
          ad::Graph g;
          std::map<std::string, ad::Val> pvals;
          for (const auto& [name, p] : state.params) pvals[name] = g.leaf(p, true);
          ad::Val loss = build_loss(g, pvals, state, train[order[k]]);
          g.backward(loss);
          train_loss_sum += g.value(loss).v[0];
          for (auto& [name, acc] : grads) {
            const Mat& pg = g.grad(pvals.at(name));
            for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += pg.v[i];
          }
        }
        const double inv = 1.0 / static_cast<double>(stop - start);
        for (auto& [name, acc] : grads)
          for (double& x : acc.v) x *= inv;
        clip_global_norm(grads, tc.clip_norm);
        adam_step(state.params, grads, ast, ac);
        check_finite(state.params);
      }

      double val_sum = 0.0;
      for (const TrainClip& clip : val) val_sum += val_loss(state, clip);
      const double val_mean = val_sum / static_cast<double>(val.size());
      if (!std::isfinite(val_mean)) throw NumericalError("non-finite validation loss");
      result.epochs.push_back(
          {train_loss_sum / static_cast<double>(train.size()), val_mean});

      if (val_mean < best_val) {
        best_val = val_mean;
        best = state;
        best_epoch = epoch;
      } else if (epoch - best_epoch >= tc.patience) {
        break;
      }
    }

    best.meta.epochs_run = static_cast<int>(result.epochs.size());
    best.meta.best_val_loss = best_val;
    result.model = std::move(best);
    return result;
  }
};

}  // namespace

TrainResult train_classifier(const std::vector<TrainClip>& train,
                             const std::vector<TrainClip>& val, std::size_t n_freq,
                             std::size_t n_classes, const ClassifierArch& arch,
                             const TrainConfig& tc) {
  for (const TrainClip& c : train)
    if (c.labels.size() != n_classes) throw ConfigError("training: label-length mismatch");
  ModelState state = init_classifier(n_freq, n_classes, arch, tc.seed);

  auto build_loss = [](ad::Graph& g, const std::map<std::string, ad::Val>& pvals,
                       const ModelState& m, const TrainClip& clip) {
    ad::Val logits = g.max_cols(mlp_graph(g, pvals, m.layer_count(), g.constant(clip.xlog)));
    Mat target(m.n_classes, 1, 0.0);
    for (std::size_t i = 0; i < m.n_classes; ++i) target.v[i] = clip.labels[i];
    return g.bce_logits_sum(logits, target);
  };
  auto val_loss = [](const ModelState& m, const TrainClip& clip) {
    const std::vector<double> z = classifier_logits(m, clip.xlog);
    double loss = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      loss += bce_logit(static_cast<double>(clip.labels[i]), z[i]);
    return loss;
  };

  EpochDriver driver{train, val, tc};
  return driver.run(std::move(state), build_loss, val_loss);
}

TrainResult train_separator(const std::vector<TrainClip>& train,
                            const std::vector<TrainClip>& val, std::size_t n_freq,
                            std::size_t n_classes, const SeparatorArch& arch,
                            const TrainConfig& tc, const ModelState& classifier,
                            const losses::LossConfig& loss_cfg) {
  if (classifier.kind != "classifier")
    throw ConfigError("training: separator training needs a classifier model");
  if (classifier.n_classes != n_classes)
    throw ConfigError("training: classifier class count does not match configuration");
  if (classifier.n_freq != n_freq)
    throw ConfigError("training: classifier frequency bins do not match configuration");
  for (const TrainClip& c : train)
    if (c.labels.size() != n_classes) throw ConfigError("training: label-length mismatch");
  loss_cfg.validate();

  ModelState state = init_separator(n_freq, n_classes, arch, tc.seed);
  const losses::ClassifierLogitsFn clf = frozen_classifier_fn(classifier);

  auto build_loss = [&clf, &loss_cfg](ad::Graph& g, const std::map<std::string, ad::Val>& pvals,
                                      const ModelState& m, const TrainClip& clip) {
    std::vector<ad::Val> masks = separator_masks_graph(g, pvals, m, clip.xlog);
    ad::Val x = g.constant(clip.xmag);
    return losses::total_loss_graph(g, clf, x, masks, clip.labels, loss_cfg);
  };
  auto val_loss = [&classifier, &loss_cfg](const ModelState& m, const TrainClip& clip) {
    const std::vector<Mat> masks = forward_separator(m, clip.xlog);
    return total_loss_value(classifier, clip.xmag, masks, clip.labels, loss_cfg);
  };

  EpochDriver driver{train, val, tc};
  TrainResult result = driver.run(std::move(state), build_loss, val_loss);
  for (const auto& spec : loss_cfg.aggregation_set.specs)
    result.model.meta.epsilon[spec.name] = loss_cfg.epsilon_for(spec.name);
  return result;
}

}  // namespace levelsep::models
