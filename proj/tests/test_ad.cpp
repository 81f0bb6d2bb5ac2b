#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "htgnn/ad.hpp"

using htgnn::ad::Mat;
using htgnn::ad::Tape;
using htgnn::ad::Var;

namespace {

Mat random_mat(std::mt19937_64& rng, int r, int c) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = dist(rng);
  return m;
}

// Central finite differences of a scalar-valued graph w.r.t. one leaf input.
template <class Builder>
double max_rel_error(Builder build, const std::vector<Mat>& inputs,
                     int wrt, double step = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Mat& m : inputs) leaves.push_back(htgnn::ad::leaf(tape, m));
  Var loss = build(tape, leaves);
  htgnn::ad::backward(loss);
  const Mat analytic = tape.grad_ref(leaves[wrt].idx);

  double worst = 0.0;
  Mat x = inputs[wrt];
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) {
      auto eval = [&](double v) {
        std::vector<Mat> in2 = inputs;
        in2[wrt](i, j) = v;
        Tape t2;
        std::vector<Var> l2;
        for (const Mat& m : in2) l2.push_back(htgnn::ad::leaf(t2, m));
        return build(t2, l2).value()(0, 0);
      };
      const double num =
          (eval(x(i, j) + step) - eval(x(i, j) - step)) / (2.0 * step);
      const double denom =
          std::max({std::abs(num), std::abs(analytic(i, j)), 1e-8});
      worst = std::max(worst, std::abs(num - analytic(i, j)) / denom);
    }
  return worst;
}

}  // namespace

TEST_CASE("matmul/add/activation gradients match finite differences") {
  std::mt19937_64 rng(42);
  std::vector<Mat> inputs = {random_mat(rng, 3, 4), random_mat(rng, 4, 2),
                             random_mat(rng, 3, 1)};
  auto build = [](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var y = matmul(v[0], v[1]);              // 3x2
    y = add_col_broadcast(y, v[2]);          // + bias
    y = silu(y);
    y = tanh_fn(y);
    y = leaky_relu(y, 0.2);
    return sum_all(cmul(y, y));
  };
  for (int w = 0; w < 3; ++w) REQUIRE(max_rel_error(build, inputs, w) < 1e-5);
}

TEST_CASE("broadcast and reduction gradients") {
  std::mt19937_64 rng(7);
  std::vector<Mat> inputs = {random_mat(rng, 4, 5), random_mat(rng, 1, 5),
                             random_mat(rng, 4, 1)};
  auto build = [](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var y = cmul_row_broadcast(v[0], v[1]);
    y = cmul_col_broadcast(y, v[2]);
    y = sigmoid(y);
    return sum_all(mean_cols(y));
  };
  for (int w = 0; w < 3; ++w) REQUIRE(max_rel_error(build, inputs, w) < 1e-6);
}

TEST_CASE("concat, slice, gather gradients") {
  std::mt19937_64 rng(11);
  std::vector<Mat> inputs = {random_mat(rng, 2, 3), random_mat(rng, 2, 3)};
  auto build = [](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var c = concat_cols({v[0], v[1]});             // 2x6
    Var r = concat_rows({v[0], v[1]});             // 4x3
    Var s = slice_cols(c, 1, 4);                   // 2x4
    Var g = gather_cols(c, {0, 0, 5, 2});          // repeated gather
    Var rr = reverse_cols(r);
    return add(add(sum_all(cmul(s, s)), sum_all(g)), sum_all(cmul(rr, rr)));
  };
  for (int w = 0; w < 2; ++w) REQUIRE(max_rel_error(build, inputs, w) < 1e-6);
}

TEST_CASE("segment softmax matches direct softmax and sums to one") {
  std::mt19937_64 rng(13);
  Mat scores = random_mat(rng, 1, 6);
  std::vector<int> seg = {0, 1, 0, 1, 1, 0};
  Tape tape;
  Var s = htgnn::ad::leaf(tape, scores);
  Var sm = htgnn::ad::segment_softmax_row(s, seg, 2);
  double sum0 = 0, sum1 = 0;
  for (int e = 0; e < 6; ++e) (seg[e] == 0 ? sum0 : sum1) += sm.value()(0, e);
  REQUIRE(sum0 == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(sum1 == Catch::Approx(1.0).epsilon(1e-12));

  // independent per-segment recomputation
  for (int g = 0; g < 2; ++g) {
    double denom = 0.0;
    for (int e = 0; e < 6; ++e)
      if (seg[e] == g) denom += std::exp(scores(0, e));
    for (int e = 0; e < 6; ++e)
      if (seg[e] == g)
        REQUIRE(sm.value()(0, e) ==
                Catch::Approx(std::exp(scores(0, e)) / denom).epsilon(1e-10));
  }

  std::vector<Mat> inputs = {scores};
  auto build = [&seg](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var y = segment_softmax_row(v[0], seg, 2);
    Mat w = Mat::Zero(1, 6);
    w << 0.3, -1.2, 0.7, 2.0, -0.5, 0.1;
    return sum_all(cmul(y, constant(t, w)));
  };
  REQUIRE(max_rel_error(build, inputs, 0) < 1e-6);
}

TEST_CASE("segment sum gradients and value-order invariance") {
  std::mt19937_64 rng(17);
  Mat x = random_mat(rng, 3, 5);
  std::vector<int> seg = {0, 0, 1, 0, 1};
  std::vector<Mat> inputs = {x};
  auto build = [&seg](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var y = segment_sum_cols(v[0], seg, 2);
    return sum_all(cmul(y, y));
  };
  REQUIRE(max_rel_error(build, inputs, 0) < 1e-6);

  // permuting columns within a segment leaves the sum bit-identical
  Tape t1, t2;
  Var a = htgnn::ad::leaf(t1, x);
  Mat xp(3, 5);
  xp.col(0) = x.col(3);
  xp.col(1) = x.col(0);
  xp.col(2) = x.col(2);
  xp.col(3) = x.col(1);
  xp.col(4) = x.col(4);
  Var b = htgnn::ad::leaf(t2, xp);
  Mat s1 = htgnn::ad::segment_sum_cols(a, seg, 2).value();
  Mat s2 = htgnn::ad::segment_sum_cols(b, seg, 2).value();
  REQUIRE((s1 - s2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("im2col convolution reproduces a hand-computed impulse response") {
  // unit impulse at t = 3, kernel [1, 2, 1]
  Mat x = Mat::Zero(1, 7);
  x(0, 3) = 1.0;
  Tape tape;
  Var xv = htgnn::ad::leaf(tape, x);
  Var col = htgnn::ad::im2col_same(xv, 3, 1);  // 3x7
  Mat w(1, 3);
  w << 1.0, 2.0, 1.0;
  Var z = htgnn::ad::matmul(htgnn::ad::constant(tape, w), col);
  Mat expected = Mat::Zero(1, 7);
  expected(0, 2) = 1.0;
  expected(0, 3) = 2.0;
  expected(0, 4) = 1.0;
  REQUIRE((z.value() - expected).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(23);
  std::vector<Mat> inputs = {random_mat(rng, 2, 9), random_mat(rng, 3, 2 * 5)};
  auto build = [](Tape& t, std::vector<Var>& v) {
    using namespace htgnn::ad;
    Var c = im2col_same(v[0], 5, 2);
    Var y = matmul(v[1], c);
    return sum_all(cmul(y, y));
  };
  for (int w2 = 0; w2 < 2; ++w2)
    REQUIRE(max_rel_error(build, inputs, w2) < 1e-6);
}

TEST_CASE("mse loss value and gradient") {
  Mat pred(2, 1), target(2, 1);
  pred << 1.0, 3.0;
  target << 0.0, 1.0;
  Tape tape;
  Var p = htgnn::ad::leaf(tape, pred);
  Var loss = htgnn::ad::mse_loss(p, target);
  REQUIRE(loss.value()(0, 0) == Catch::Approx((1.0 + 4.0) / 2.0));
  htgnn::ad::backward(loss);
  REQUIRE(tape.grad_ref(p.idx)(0, 0) == Catch::Approx(1.0));
  REQUIRE(tape.grad_ref(p.idx)(1, 0) == Catch::Approx(2.0));
}
