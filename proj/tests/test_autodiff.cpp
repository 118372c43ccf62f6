// Copyright 2026 the levelsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "levelsep/autodiff.hpp"
#include "test_util.hpp"

using namespace levelsep;
using testutil::random_mat;

namespace {

// Central-difference check of d(scalar loss)/d(x) for one op under test. The
// builder must construct a 1x1 loss from the leaf inside the given graph.
void fd_check(const Mat& x0, const std::function<ad::Val(ad::Graph&, ad::Val)>& build,
              double h = 1e-6, double tol = 1e-6) {
  ad::Graph g;
  ad::Val x = g.leaf(x0, true);
  ad::Val loss = build(g, x);
  g.backward(loss);
  const Mat& grad = g.grad(x);
  REQUIRE(grad.rows == x0.rows);
  REQUIRE(grad.cols == x0.cols);

  for (std::size_t i = 0; i < x0.size(); ++i) {
    Mat xp = x0, xm = x0;
    xp.v[i] += h;
    xm.v[i] -= h;
    ad::Graph gp, gm;
    const double fp = gp.value(build(gp, gp.leaf(xp, true))).v[0];
    const double fm = gm.value(build(gm, gm.leaf(xm, true))).v[0];
    const double num = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(num), std::abs(grad.v[i]), 1e-3});
    CHECK(std::abs(grad.v[i] - num) / denom < tol);
  }
}

}  // namespace

TEST_CASE("sum gradient is all ones") {
  ad::Graph g;
  ad::Val x = g.leaf(Mat(3, 4, 2.5), true);
  g.backward(g.vsum(x));
  for (double d : g.grad(x).v) CHECK(d == 1.0);
}

TEST_CASE("mean gradient is 1/n") {
  ad::Graph g;
  ad::Val x = g.leaf(Mat(2, 5, 1.0), true);
  g.backward(g.vmean(x));
  for (double d : g.grad(x).v) CHECK(d == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("sigmoid value and derivative at zero") {
  ad::Graph g;
  ad::Val x = g.leaf(Mat(1, 1, 0.0), true);
  ad::Val s = g.sigmoid(x);
  CHECK(g.value(s).v[0] == 0.5);
  g.backward(g.vsum(s));
  CHECK(g.grad(x).v[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("relu routes gradient only through positive entries") {
  ad::Graph g;
  Mat xv(1, 3);
  xv.v = {-2.0, 0.0, 3.0};
  ad::Val x = g.leaf(xv, true);
  g.backward(g.vsum(g.relu(x)));
  CHECK(g.grad(x).v[0] == 0.0);
  CHECK(g.grad(x).v[1] == 0.0);  // subgradient 0 at the kink
  CHECK(g.grad(x).v[2] == 1.0);
}

TEST_CASE("max_cols picks the first argmax on ties") {
  ad::Graph g;
  Mat xv(2, 3);
  xv.v = {1.0, 5.0, 5.0, 7.0, 2.0, 7.0};
  ad::Val x = g.leaf(xv, true);
  ad::Val m = g.max_cols(x);
  REQUIRE(g.value(m).rows == 2);
  REQUIRE(g.value(m).cols == 1);
  CHECK(g.value(m).v[0] == 5.0);
  CHECK(g.value(m).v[1] == 7.0);
  g.backward(g.vsum(m));
  const Mat& d = g.grad(x);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(0, 1) == 1.0);
  CHECK(d.at(0, 2) == 0.0);
  CHECK(d.at(1, 0) == 1.0);
  CHECK(d.at(1, 2) == 0.0);
}

TEST_CASE("max_all takes the global max with subgradient at the first argmax") {
  ad::Graph g;
  Mat xv(2, 2);
  xv.v = {3.0, 9.0, 9.0, 1.0};
  ad::Val x = g.leaf(xv, true);
  ad::Val m = g.max_all(x);
  CHECK(g.value(m).v[0] == 9.0);
  g.backward(m);
  CHECK(g.grad(x).v[1] == 1.0);
  CHECK(g.grad(x).v[2] == 0.0);
}

TEST_CASE("finite differences validate every smooth op") {
  std::mt19937_64 rng(11);
  const Mat a = random_mat(3, 4, rng, -1.0, 1.0);
  const Mat pos = random_mat(3, 4, rng, 0.2, 2.0);

  fd_check(a, [](ad::Graph& g, ad::Val x) { return g.vsum(g.sigmoid(x)); });
  fd_check(pos, [](ad::Graph& g, ad::Val x) { return g.vsum(g.vlog(x)); });
  fd_check(a, [](ad::Graph& g, ad::Val x) { return g.vsum(g.vexp(x)); });
  fd_check(a, [](ad::Graph& g, ad::Val x) { return g.vmean(g.mul(x, x)); });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.scale(g.add_scalar(x, 0.7), 3.0));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    ad::Val c = g.constant(Mat(3, 4, 0.5));
    return g.vsum(g.mul(g.add(x, c), g.sub(x, c)));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) { return g.vsum(g.slice_rows(x, 1, 2)); });
  fd_check(a, [](ad::Graph& g, ad::Val x) { return g.vsum(g.slice_cols(x, 2, 2)); });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.concat_rows(x, g.constant(Mat(2, 4, 1.0))));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.concat_cols(g.constant(Mat(3, 2, 1.0)), x));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.badd(x, g.scalar(0.3)));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.bmul(x, g.scalar(1.7)));
  });
  fd_check(a, [](ad::Graph& g, ad::Val x) {
    return g.vsum(g.bsub(x, g.scalar(0.2)));
  });
}

TEST_CASE("matmul gradients for both operands") {
  std::mt19937_64 rng(12);
  const Mat a0 = random_mat(3, 5, rng, -1.0, 1.0);
  const Mat b0 = random_mat(5, 2, rng, -1.0, 1.0);

  // d/dA of sum(A*B).
  fd_check(a0, [&](ad::Graph& g, ad::Val x) {
    return g.vsum(g.matmul(x, g.constant(b0)));
  });
  // d/dB of sum(A*B).
  fd_check(b0, [&](ad::Graph& g, ad::Val x) {
    return g.vsum(g.matmul(g.constant(a0), x));
  });
}

TEST_CASE("add_colvec broadcasts across columns with summed gradient") {
  std::mt19937_64 rng(13);
  const Mat a0 = random_mat(4, 6, rng, -1.0, 1.0);
  const Mat b0 = random_mat(4, 1, rng, -1.0, 1.0);
  fd_check(b0, [&](ad::Graph& g, ad::Val x) {
    return g.vsum(g.sigmoid(g.add_colvec(g.constant(a0), x)));
  });
  ad::Graph g;
  ad::Val b = g.leaf(b0, true);
  g.backward(g.vsum(g.add_colvec(g.constant(a0), b)));
  for (double d : g.grad(b).v) CHECK(d == 6.0);
}

TEST_CASE("bce_logits_sum matches the textbook values") {
  // H(0, sigmoid(0)) = ln 2; H(1, sigmoid(logit(0.9))) = -ln 0.9.
  ad::Graph g;
  Mat logits(1, 2);
  logits.v = {0.0, std::log(0.9 / 0.1)};
  Mat targets(1, 2);
  targets.v = {0.0, 1.0};
  ad::Val x = g.leaf(logits, true);
  ad::Val loss = g.bce_logits_sum(x, targets);
  CHECK(g.value(loss).v[0] ==
        doctest::Approx(std::log(2.0) - std::log(0.9)).epsilon(1e-12));
  g.backward(loss);
  // d/dlogit BCE(y, sigmoid(l)) = sigmoid(l) - y.
  CHECK(g.grad(x).v[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(g.grad(x).v[1] == doctest::Approx(0.9 - 1.0).epsilon(1e-9));
}

TEST_CASE("bce_logits_sum is stable at extreme logits") {
  ad::Graph g;
  Mat logits(1, 2);
  logits.v = {500.0, -500.0};
  Mat targets(1, 2);
  targets.v = {1.0, 0.0};
  ad::Val loss = g.bce_logits_sum(g.leaf(logits, true), targets);
  CHECK(std::isfinite(g.value(loss).v[0]));
  CHECK(g.value(loss).v[0] == doctest::Approx(0.0).epsilon(1e-12));

  ad::Graph g2;
  Mat t2(1, 2);
  t2.v = {0.0, 1.0};  // maximally wrong labels
  ad::Val x2 = g2.leaf(logits, true);
  ad::Val l2 = g2.bce_logits_sum(x2, t2);
  CHECK(std::isfinite(g2.value(l2).v[0]));
  CHECK(g2.value(l2).v[0] == doctest::Approx(1000.0).epsilon(1e-9));
  g2.backward(l2);
  for (double d : g2.grad(x2).v) CHECK(std::isfinite(d));
}

TEST_CASE("bce_logits_sum under finite differences") {
  std::mt19937_64 rng(14);
  const Mat logits = random_mat(2, 3, rng, -2.0, 2.0);
  Mat targets(2, 3);
  for (std::size_t i = 0; i < targets.size(); ++i) targets.v[i] = (i % 2 == 0) ? 1.0 : 0.0;
  fd_check(logits, [&](ad::Graph& g, ad::Val x) { return g.bce_logits_sum(x, targets); });
}

TEST_CASE("gradients accumulate across reuse of a node") {
  ad::Graph g;
  ad::Val x = g.leaf(Mat(1, 1, 3.0), true);
  ad::Val y = g.add(g.mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 7
  g.backward(g.vsum(y));
  CHECK(g.grad(x).v[0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("backward requires a scalar loss") {
  ad::Graph g;
  ad::Val x = g.leaf(Mat(2, 2, 1.0), true);
  CHECK_THROWS_AS(g.backward(x), NumericalError);
}

TEST_CASE("shape mismatches are rejected") {
  ad::Graph g;
  ad::Val a = g.leaf(Mat(2, 3, 1.0), true);
  ad::Val b = g.leaf(Mat(3, 2, 1.0), true);
  CHECK_THROWS_AS(g.add(a, b), NumericalError);
  CHECK_THROWS_AS(g.mul(a, b), NumericalError);
  CHECK_THROWS_AS(g.matmul(a, g.leaf(Mat(2, 2, 1.0), true)), NumericalError);
}

TEST_CASE("grad access on a no-grad node throws") {
  ad::Graph g;
  ad::Val c = g.constant(Mat(1, 1, 1.0));
  ad::Val x = g.leaf(Mat(1, 1, 2.0), true);
  g.backward(g.vsum(g.add(x, c)));
  CHECK(g.grad(x).v[0] == 1.0);
  CHECK_THROWS_AS(g.grad(c), NumericalError);
}
