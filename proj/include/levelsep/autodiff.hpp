// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef LEVELSEP_AUTODIFF_HPP
#define LEVELSEP_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "levelsep/common.hpp"

namespace levelsep::ad {

class Graph;

// Handle to one node on the tape. Cheap to copy; valid while the Graph
// lives.
struct Val {
  Graph* g = nullptr;
  std::uint32_t id = 0;
};

// Reverse-mode tape over 2-D tensors (Mat). Nodes are appended in
// evaluation order; backward() walks the tape in reverse, accumulating
// gradients into every node that (transitively) depends on a
// requires-grad leaf.
class Graph {
 public:
  Val leaf(Mat value, bool requires_grad);
  Val constant(Mat value) { return leaf(std::move(value), false); }
  Val scalar(double x) { return leaf(Mat(1, 1, x), false); }

  const Mat& value(Val v) const { return nodes_[v.id].val; }
  const Mat& grad(Val v) const;
  bool needs_grad(Val v) const { return nodes_[v.id].needs_grad; }

  // loss must be 1x1; seeds d(loss)/d(loss) = 1 and accumulates.
  void backward(Val loss);

  std::size_t node_count() const { return nodes_.size(); }

  // --- ops ---
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);  // elementwise
  Val matmul(Val a, Val b);
  Val relu(Val a);
  Val rectify(Val a) { return relu(a); }  // half-wave rectification
  Val sigmoid(Val a);
  Val vlog(Val a);
  Val vexp(Val a);
  Val vsum(Val a);   // -> 1x1
  Val vmean(Val a);  // -> 1x1
  Val max_all(Val a);                    // -> 1x1, subgradient to first argmax
  Val max_cols(Val a);                   // per-row max over columns -> rows x 1
  Val concat_rows(Val a, Val b);
  Val concat_cols(Val a, Val b);
  Val slice_rows(Val a, std::size_t r0, std::size_t n);
  Val slice_cols(Val a, std::size_t c0, std::size_t n);
  Val add_colvec(Val a, Val b);  // b is rows x 1, broadcast across columns
  Val badd(Val a, Val s);        // s is 1x1, broadcast
  Val bsub(Val a, Val s);
  Val bmul(Val a, Val s);
  Val scale(Val a, double k);
  Val add_scalar(Val a, double c);
  Val neg(Val a) { return scale(a, -1.0); }
  // sum over entries of BCE(target, sigmoid(logit)), computed from logits
  // for stability; targets is a same-shape constant of {0,1} entries.
  Val bce_logits_sum(Val logits, const Mat& targets);

 private:
  struct Node {
    Mat val;
    Mat grad;  // allocated only when needs_grad
    bool needs_grad = false;
    std::function<void(Graph&)> back;  // empty for leaves/constants
  };
  std::vector<Node> nodes_;

  Val push(Mat value, bool needs_grad, std::function<void(Graph&)> back);
  Mat& grad_ref(std::uint32_t id) { return nodes_[id].grad; }
  const Mat& val_ref(std::uint32_t id) const { return nodes_[id].val; }
  bool ng(std::uint32_t id) const { return nodes_[id].needs_grad; }
};

// Operator sugar for readable loss code.
inline Val operator+(Val a, Val b) { return a.g->add(a, b); }
inline Val operator-(Val a, Val b) { return a.g->sub(a, b); }
inline Val operator*(Val a, Val b) { return a.g->mul(a, b); }

// C = A * B^T and C = A^T * B, used by matmul backward and exposed for
// reuse.
Mat matmul_nt(const Mat& a, const Mat& b);
Mat matmul_tn(const Mat& a, const Mat& b);

}  // namespace levelsep::ad

#endif  // LEVELSEP_AUTODIFF_HPP
