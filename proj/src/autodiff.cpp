// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "levelsep/autodiff.hpp"

#include <cmath>

namespace levelsep::ad {

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols) throw NumericalError("matmul_nt: shape mismatch");
  Mat c(a.rows, b.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = &a.v[i * a.cols];
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = &b.v[j * b.cols];
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      c.v[i * b.rows + j] = acc;
    }
  }
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows != b.rows) throw NumericalError("matmul_tn: shape mismatch");
  Mat c(a.cols, b.cols, 0.0);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = &a.v[k * a.cols];
    const double* brow = &b.v[k * b.cols];
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &c.v[i * b.cols];
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

namespace {
void accumulate(Mat& dst, const Mat& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}
}  // namespace

Val Graph::push(Mat value, bool needs_grad, std::function<void(Graph&)> back) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad = Mat(n.val.rows, n.val.cols, 0.0);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Val{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Val Graph::leaf(Mat value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

const Mat& Graph::grad(Val v) const {
  if (!nodes_[v.id].needs_grad) throw NumericalError("grad requested for non-grad node");
  return nodes_[v.id].grad;
}

void Graph::backward(Val loss) {
  const Mat& lv = nodes_[loss.id].val;
  if (lv.rows != 1 || lv.cols != 1) throw NumericalError("backward: loss must be scalar");
  if (!nodes_[loss.id].needs_grad) return;  // nothing depends on parameters
  nodes_[loss.id].grad.v[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back) n.back(*this);
  }
}

Val Graph::add(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (!av.same_shape(bv)) throw NumericalError("add: shape mismatch");
  Mat out = av;
  accumulate(out, bv);
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, b](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), go);
    if (g.ng(b.id)) accumulate(g.grad_ref(b.id), go);
  });
}

Val Graph::sub(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (!av.same_shape(bv)) throw NumericalError("sub: shape mismatch");
  Mat out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= bv.v[i];
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, b](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), go);
    if (g.ng(b.id)) {
      Mat& db = g.grad_ref(b.id);
      for (std::size_t i = 0; i < db.v.size(); ++i) db.v[i] -= go.v[i];
    }
  });
}

Val Graph::mul(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (!av.same_shape(bv)) throw NumericalError("mul: shape mismatch");
  Mat out = av;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= bv.v[i];
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, b](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) {
      Mat& da = g.grad_ref(a.id);
      const Mat& bv2 = g.val_ref(b.id);
      for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] += go.v[i] * bv2.v[i];
    }
    if (g.ng(b.id)) {
      Mat& db = g.grad_ref(b.id);
      const Mat& av2 = g.val_ref(a.id);
      for (std::size_t i = 0; i < db.v.size(); ++i) db.v[i] += go.v[i] * av2.v[i];
    }
  });
}

Val Graph::matmul(Val a, Val b) {
  Mat out = levelsep::matmul(val_ref(a.id), val_ref(b.id));
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, b](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), matmul_nt(go, g.val_ref(b.id)));
    if (g.ng(b.id)) accumulate(g.grad_ref(b.id), matmul_tn(g.val_ref(a.id), go));
  });
}

Val Graph::relu(Val a) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) x = x > 0.0 ? x : 0.0;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    const Mat& av = g.val_ref(a.id);
    Mat& da = g.grad_ref(a.id);
    // subgradient 0 at the kink
    for (std::size_t i = 0; i < da.v.size(); ++i)
      if (av.v[i] > 0.0) da.v[i] += go.v[i];
  });
}

Val Graph::sigmoid(Val a) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) {
    x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    const Mat& sv = g.val_ref(self);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t i = 0; i < da.v.size(); ++i)
      da.v[i] += go.v[i] * sv.v[i] * (1.0 - sv.v[i]);
  });
}

Val Graph::vlog(Val a) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) x = std::log(x);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    const Mat& av = g.val_ref(a.id);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] += go.v[i] / av.v[i];
  });
}

Val Graph::vexp(Val a) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) x = std::exp(x);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    const Mat& ev = g.val_ref(self);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] += go.v[i] * ev.v[i];
  });
}

Val Graph::vsum(Val a) {
  double acc = 0.0;
  for (double x : val_ref(a.id).v) acc += x;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(Mat(1, 1, acc), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    const double go = g.grad_ref(self).v[0];
    Mat& da = g.grad_ref(a.id);
    for (double& x : da.v) x += go;
  });
}

Val Graph::vmean(Val a) {
  const Mat& av = val_ref(a.id);
  double acc = 0.0;
  for (double x : av.v) acc += x;
  const double n = static_cast<double>(av.v.size());
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(Mat(1, 1, acc / n), ng(a.id), [self, a, n](Graph& g) {
    if (!g.ng(a.id)) return;
    const double go = g.grad_ref(self).v[0] / n;
    Mat& da = g.grad_ref(a.id);
    for (double& x : da.v) x += go;
  });
}

Val Graph::max_all(Val a) {
  const Mat& av = val_ref(a.id);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < av.v.size(); ++i)
    if (av.v[i] > av.v[arg]) arg = i;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(Mat(1, 1, av.v[arg]), ng(a.id), [self, a, arg](Graph& g) {
    if (!g.ng(a.id)) return;
    g.grad_ref(a.id).v[arg] += g.grad_ref(self).v[0];
  });
}

Val Graph::max_cols(Val a) {
  const Mat& av = val_ref(a.id);
  Mat out(av.rows, 1);
  std::vector<std::size_t> args(av.rows);
  for (std::size_t r = 0; r < av.rows; ++r) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < av.cols; ++c)
      if (av.at(r, c) > av.at(r, arg)) arg = c;
    args[r] = arg;
    out.v[r] = av.at(r, arg);
  }
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a, args = std::move(args)](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t r = 0; r < da.rows; ++r) da.at(r, args[r]) += go.v[r];
  });
}

Val Graph::concat_rows(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (av.cols != bv.cols) throw NumericalError("concat_rows: column mismatch");
  Mat out(av.rows + bv.rows, av.cols);
  std::copy(av.v.begin(), av.v.end(), out.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(av.v.size()));
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  const std::size_t split = av.v.size();
  return push(std::move(out), needs, [self, a, b, split](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) {
      Mat& da = g.grad_ref(a.id);
      for (std::size_t i = 0; i < split; ++i) da.v[i] += go.v[i];
    }
    if (g.ng(b.id)) {
      Mat& db = g.grad_ref(b.id);
      for (std::size_t i = 0; i < db.v.size(); ++i) db.v[i] += go.v[split + i];
    }
  });
}

Val Graph::concat_cols(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (av.rows != bv.rows) throw NumericalError("concat_cols: row mismatch");
  Mat out(av.rows, av.cols + bv.cols);
  for (std::size_t r = 0; r < av.rows; ++r) {
    for (std::size_t c = 0; c < av.cols; ++c) out.at(r, c) = av.at(r, c);
    for (std::size_t c = 0; c < bv.cols; ++c) out.at(r, av.cols + c) = bv.at(r, c);
  }
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  const std::size_t ac = av.cols;
  return push(std::move(out), needs, [self, a, b, ac](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) {
      Mat& da = g.grad_ref(a.id);
      for (std::size_t r = 0; r < da.rows; ++r)
        for (std::size_t c = 0; c < da.cols; ++c) da.at(r, c) += go.at(r, c);
    }
    if (g.ng(b.id)) {
      Mat& db = g.grad_ref(b.id);
      for (std::size_t r = 0; r < db.rows; ++r)
        for (std::size_t c = 0; c < db.cols; ++c) db.at(r, c) += go.at(r, ac + c);
    }
  });
}

Val Graph::slice_rows(Val a, std::size_t r0, std::size_t n) {
  const Mat& av = val_ref(a.id);
  if (r0 + n > av.rows) throw NumericalError("slice_rows: out of range");
  Mat out(n, av.cols);
  std::copy(av.v.begin() + static_cast<std::ptrdiff_t>(r0 * av.cols),
            av.v.begin() + static_cast<std::ptrdiff_t>((r0 + n) * av.cols), out.v.begin());
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a, r0](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    Mat& da = g.grad_ref(a.id);
    double* base = &da.v[r0 * da.cols];
    for (std::size_t i = 0; i < go.v.size(); ++i) base[i] += go.v[i];
  });
}

Val Graph::slice_cols(Val a, std::size_t c0, std::size_t n) {
  const Mat& av = val_ref(a.id);
  if (c0 + n > av.cols) throw NumericalError("slice_cols: out of range");
  Mat out(av.rows, n);
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out.at(r, c) = av.at(r, c0 + c);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a, c0](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t r = 0; r < go.rows; ++r)
      for (std::size_t c = 0; c < go.cols; ++c) da.at(r, c0 + c) += go.at(r, c);
  });
}

Val Graph::add_colvec(Val a, Val b) {
  const Mat &av = val_ref(a.id), &bv = val_ref(b.id);
  if (bv.cols != 1 || bv.rows != av.rows) throw NumericalError("add_colvec: shape mismatch");
  Mat out = av;
  for (std::size_t r = 0; r < av.rows; ++r)
    for (std::size_t c = 0; c < av.cols; ++c) out.at(r, c) += bv.v[r];
  bool needs = ng(a.id) || ng(b.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, b](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), go);
    if (g.ng(b.id)) {
      Mat& db = g.grad_ref(b.id);
      for (std::size_t r = 0; r < go.rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < go.cols; ++c) acc += go.at(r, c);
        db.v[r] += acc;
      }
    }
  });
}

Val Graph::badd(Val a, Val s) {
  const Mat& sv = val_ref(s.id);
  if (sv.rows != 1 || sv.cols != 1) throw NumericalError("badd: scalar expected");
  Mat out = val_ref(a.id);
  for (double& x : out.v) x += sv.v[0];
  bool needs = ng(a.id) || ng(s.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, s](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), go);
    if (g.ng(s.id)) {
      double acc = 0.0;
      for (double x : go.v) acc += x;
      g.grad_ref(s.id).v[0] += acc;
    }
  });
}

Val Graph::bsub(Val a, Val s) {
  const Mat& sv = val_ref(s.id);
  if (sv.rows != 1 || sv.cols != 1) throw NumericalError("bsub: scalar expected");
  Mat out = val_ref(a.id);
  for (double& x : out.v) x -= sv.v[0];
  bool needs = ng(a.id) || ng(s.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, s](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) accumulate(g.grad_ref(a.id), go);
    if (g.ng(s.id)) {
      double acc = 0.0;
      for (double x : go.v) acc += x;
      g.grad_ref(s.id).v[0] -= acc;
    }
  });
}

Val Graph::bmul(Val a, Val s) {
  const Mat& sv = val_ref(s.id);
  if (sv.rows != 1 || sv.cols != 1) throw NumericalError("bmul: scalar expected");
  Mat out = val_ref(a.id);
  for (double& x : out.v) x *= sv.v[0];
  bool needs = ng(a.id) || ng(s.id);
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [self, a, s](Graph& g) {
    const Mat& go = g.grad_ref(self);
    if (g.ng(a.id)) {
      Mat& da = g.grad_ref(a.id);
      const double k = g.val_ref(s.id).v[0];
      for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] += go.v[i] * k;
    }
    if (g.ng(s.id)) {
      const Mat& av = g.val_ref(a.id);
      double acc = 0.0;
      for (std::size_t i = 0; i < av.v.size(); ++i) acc += go.v[i] * av.v[i];
      g.grad_ref(s.id).v[0] += acc;
    }
  });
}

Val Graph::scale(Val a, double k) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) x *= k;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a, k](Graph& g) {
    if (!g.ng(a.id)) return;
    const Mat& go = g.grad_ref(self);
    Mat& da = g.grad_ref(a.id);
    for (std::size_t i = 0; i < da.v.size(); ++i) da.v[i] += k * go.v[i];
  });
}

Val Graph::add_scalar(Val a, double c) {
  Mat out = val_ref(a.id);
  for (double& x : out.v) x += c;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), ng(a.id), [self, a](Graph& g) {
    if (!g.ng(a.id)) return;
    accumulate(g.grad_ref(a.id), g.grad_ref(self));
  });
}

Val Graph::bce_logits_sum(Val logits, const Mat& targets) {
  const Mat& zv = val_ref(logits.id);
  if (!zv.same_shape(targets)) throw NumericalError("bce_logits_sum: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < zv.v.size(); ++i) {
    const double z = zv.v[i], t = targets.v[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(Mat(1, 1, acc), ng(logits.id), [self, logits, targets](Graph& g) {
    if (!g.ng(logits.id)) return;
    const double go = g.grad_ref(self).v[0];
    const Mat& zv2 = g.val_ref(logits.id);
    Mat& dz = g.grad_ref(logits.id);
    for (std::size_t i = 0; i < dz.v.size(); ++i) {
      const double z = zv2.v[i];
      const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      dz.v[i] += go * (s - targets.v[i]);
    }
  });
}

}  // namespace levelsep::ad
