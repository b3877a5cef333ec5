#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "adiva/autodiff.hpp"
#include "adiva/rng.hpp"

using namespace adiva;

namespace {

using Op = std::function<ad::Var(ad::Graph&, ad::Var)>;

// Max relative error between the tape gradient of sum(w * op(x)) and central differences.
double op_grad_error(const Mat& x0, const Op& op) {
  Rng rng = Rng::stream(7, {1});
  ad::Graph probe;
  const Mat out_shape = op(probe, probe.constant(x0)).value();
  const Mat w = rng.normal_mat(out_shape.rows(), out_shape.cols());

  auto value = [&](const Mat& x) {
    ad::Graph g;
    return ad::sum(ad::mul_const(op(g, g.constant(x)), w)).scalar();
  };
  ad::Graph g;
  ad::Var x = g.leaf(x0);
  ad::Var loss = ad::sum(ad::mul_const(op(g, x), w));
  g.backward(loss);
  const Mat grad = x.grad();

  double worst = 0.0;
  Mat xp = x0;
  const double eps = 1e-6;
  for (Index i = 0; i < xp.size(); ++i) {
    const double o = xp.data()[i];
    xp.data()[i] = o + eps;
    const double up = value(xp);
    xp.data()[i] = o - eps;
    const double down = value(xp);
    xp.data()[i] = o;
    const double num = (up - down) / (2 * eps);
    const double den = std::max({std::abs(num), std::abs(grad.data()[i]), 1e-6});
    worst = std::max(worst, std::abs(num - grad.data()[i]) / den);
  }
  return worst;
}

Mat sample(Index r, Index c, std::uint64_t tag) { return Rng::stream(3, {tag}).normal_mat(r, c); }

}  // namespace

TEST(Autodiff, ElementwiseOps) {
  const Mat x = sample(3, 4, 1);
  const Mat pos = x.cwiseAbs().array() + 0.5;
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::exp(v); }), 1e-6);
  EXPECT_LT(op_grad_error(pos, [](ad::Graph&, ad::Var v) { return ad::log(v); }), 1e-6);
  EXPECT_LT(op_grad_error(pos, [](ad::Graph&, ad::Var v) { return ad::abs(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::square(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::gelu(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::leaky_relu(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::sigmoid(v); }), 1e-6);
}

TEST(Autodiff, RowOps) {
  const Mat x = sample(3, 5, 2);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_softmax(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_logsumexp(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_max(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_l2_normalize(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_standardize(v); }), 1e-5);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_sum(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::row_dot(v, ad::square(v)); }), 1e-6);
}

TEST(Autodiff, ShapeOps) {
  const Mat x = sample(4, 3, 3);
  const Mat c = sample(4, 3, 4);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::transpose(v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::reshape(v, 2, 6); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::tile_rows(v, 3); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::repeat_rows(v, 2); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::slice_cols(v, 1, 2); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::concat_cols({v, ad::square(v)}); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [&](ad::Graph& g, ad::Var v) { return ad::mul(v, g.constant(c)); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [](ad::Graph&, ad::Var v) { return ad::mean(v); }), 1e-6);
}

TEST(Autodiff, Products) {
  const Mat x = sample(6, 3, 5);
  const Mat w = sample(3, 4, 6);
  const Mat row = sample(1, 3, 7);
  const Mat col = sample(6, 1, 8);
  EXPECT_LT(op_grad_error(x, [&](ad::Graph& g, ad::Var v) { return ad::matmul(v, g.constant(w)); }), 1e-6);
  EXPECT_LT(op_grad_error(w, [&](ad::Graph& g, ad::Var v) { return ad::matmul(g.constant(x), v); }), 1e-6);
  EXPECT_LT(op_grad_error(x, [&](ad::Graph& g, ad::Var v) { return ad::add_row(v, g.constant(row)); }), 1e-6);
  EXPECT_LT(op_grad_error(row, [&](ad::Graph& g, ad::Var v) { return ad::mul_row(g.constant(x), v); }), 1e-6);
  EXPECT_LT(op_grad_error(col, [&](ad::Graph& g, ad::Var v) { return ad::sub_col(g.constant(x), v); }), 1e-6);
  const Mat y = sample(4, 3, 9);
  EXPECT_LT(op_grad_error(x, [&](ad::Graph& g, ad::Var v) { return ad::seg_matmul_abt(v, g.constant(y), 2); }), 1e-6);
  EXPECT_LT(op_grad_error(y, [&](ad::Graph& g, ad::Var v) { return ad::seg_matmul_abt(g.constant(x), v, 2); }), 1e-6);
  const Mat z = sample(6, 5, 10);
  EXPECT_LT(op_grad_error(x, [&](ad::Graph& g, ad::Var v) { return ad::seg_matmul_ab(v, g.constant(z), 2); }), 1e-6);
  EXPECT_LT(op_grad_error(z, [&](ad::Graph& g, ad::Var v) { return ad::seg_matmul_ab(g.constant(x), v, 2); }), 1e-6);
}

TEST(Autodiff, SharedNodeAccumulates) {
  ad::Graph g;
  ad::Var x = g.leaf(Mat::Constant(1, 1, 3.0));
  ad::Var y = ad::mul(x, x) + x;
  g.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 7.0);
}

TEST(Autodiff, ConstantsGetNoGradient) {
  ad::Graph g;
  ad::Var c = g.constant(Mat::Ones(2, 2));
  ad::Var x = g.leaf(Mat::Ones(2, 2));
  g.backward(ad::sum(ad::mul(c, x)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(x.grad().isApprox(Mat::Ones(2, 2)));
}

TEST(Autodiff, ShapeMismatchThrows) {
  ad::Graph g;
  EXPECT_THROW(ad::add(g.constant(Mat::Ones(2, 2)), g.constant(Mat::Ones(2, 3))), Error);
  EXPECT_THROW(ad::matmul(g.constant(Mat::Ones(2, 2)), g.constant(Mat::Ones(3, 3))), Error);
}
