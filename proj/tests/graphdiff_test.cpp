// Copyright 2026 The LOQA Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "loqa/agents.hpp"
#include "loqa/graphdiff.hpp"
#include "loqa/rng.hpp"

namespace gd = loqa::graphdiff;
using gd::Matrix;
using gd::Tape;
using gd::Var;

namespace {

Matrix random_matrix(int r, int c, loqa::Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * loqa::uniform01(rng) - 1.0);
  return m;
}

// Wraps a unary primitive into a scalar loss with a fixed random projection so
// every output coordinate reaches the gradient.
gd::ScalarFn unary(std::function<Var(const Var&)> op, const Matrix& proj) {
  return [op, proj](Tape&, std::span<const Var> p) { return gd::sum(gd::mul(op(p[0]), proj)); };
}

}  // namespace

TEST(MagicBox, ForwardIsExactlyOne) {
  loqa::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Var x = tape.parameter(random_matrix(3, 4, rng, 50.0));
    const Matrix v = gd::magic_box(x).value();
    EXPECT_TRUE((v.array() == 1.0).all());
  }
}

TEST(MagicBox, GradientEqualsGradientOfArgument) {
  Tape tape;
  Var p = tape.parameter(Matrix::Constant(1, 1, 0.7));
  Var x = gd::scale(gd::mul(p, p), 3.0);  // x = 3 p^2
  tape.backward(gd::sum(gd::magic_box(x)));
  EXPECT_NEAR(tape.grad(p)(0, 0), 6.0 * 0.7, 1e-15);
}

TEST(MagicBox, FiniteDifferenceOfBoxedProduct) {
  // f(p) = sum(box(log p) * c): gradient c / p while the value stays sum(c).
  const Matrix c = (Matrix(1, 3) << 1.0, -2.0, 0.5).finished();
  auto f = [c](Tape&, std::span<const Var> p) { return gd::sum(gd::mul(gd::magic_box(gd::log(p[0])), c)); };
  Tape tape;
  Var p = tape.parameter((Matrix(1, 3) << 0.5, 2.0, 1.5).finished());
  Var loss = f(tape, std::span<const Var>(&p, 1));
  EXPECT_DOUBLE_EQ(loss.scalar(), -0.5);
  tape.backward(loss);
  EXPECT_NEAR(tape.grad(p)(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(tape.grad(p)(0, 1), -1.0, 1e-14);
  EXPECT_NEAR(tape.grad(p)(0, 2), 1.0 / 3.0, 1e-14);
}

TEST(MagicBox, PinnedFiniteDifferencesSeeTheSurrogateGradient) {
  // The check holds stop_gradient at its base value, so central differences
  // of exp(x - x0) recover the boxed gradient instead of zero.
  loqa::Rng rng(8);
  const Matrix c = random_matrix(2, 3, rng);
  auto f = [c](Tape&, std::span<const Var> p) {
    Var x = gd::tanh(p[0]);
    return gd::sum(gd::mul(gd::magic_box(gd::scale(gd::mul(x, x), 2.0)), c));
  };
  EXPECT_LT(gd::finite_diff_check(f, {random_matrix(2, 3, rng)}, 1e-5), 1e-6);
}

TEST(MagicBox, ReplayMismatchIsReported) {
  Tape tape;
  const std::vector<Matrix> pinned = {Matrix::Zero(2, 2)};
  tape.replay_stopped(&pinned);
  Var x = tape.parameter(Matrix::Zero(1, 1));
  EXPECT_THROW(gd::stop_gradient(x), gd::ShapeError);
  tape.replay_stopped(&pinned);
  Var y = tape.parameter(Matrix::Ones(2, 2));
  EXPECT_EQ(gd::stop_gradient(y).value().sum(), 0.0);
  EXPECT_THROW(gd::stop_gradient(y), std::logic_error);
}

TEST(Backward, IdentityLossHasUnitGradient) {
  Tape tape;
  Var p = tape.parameter(Matrix::Constant(1, 1, -4.2));
  tape.backward(p);
  EXPECT_EQ(tape.grad(p)(0, 0), 1.0);
}

TEST(Backward, LinearMapGradientIsColumnSumOfInput) {
  // loss = sum(X W): dW(i, j) = sum_r X(r, i).
  loqa::Rng rng(11);
  const Matrix X = random_matrix(4, 3, rng);
  Tape tape;
  Var W = tape.parameter(random_matrix(3, 2, rng));
  tape.backward(gd::sum(gd::matmul(tape.constant(X), W)));
  const Matrix expect = X.colwise().sum().transpose() * Matrix::Ones(1, 2);
  EXPECT_LT((tape.grad(W) - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Backward, NonScalarLossThrows) {
  Tape tape;
  Var p = tape.parameter(Matrix::Ones(2, 1));
  EXPECT_THROW(tape.backward(p), gd::ShapeError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Matrix::Ones(2, 2));
  Var p = tape.parameter(Matrix::Ones(2, 2));
  tape.backward(gd::sum(gd::mul(c, p)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_EQ(tape.grad(c).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(tape.grad(p), Matrix::Ones(2, 2));
}

TEST(Backward, StopGradientBlocksFlow) {
  Tape tape;
  Var p = tape.parameter(Matrix::Constant(1, 1, 2.0));
  tape.backward(gd::sum(gd::mul(gd::stop_gradient(p), p)));
  EXPECT_DOUBLE_EQ(tape.grad(p)(0, 0), 2.0);
}

TEST(Backward, ClearedTapeRejectsOldVars) {
  Tape tape;
  Var p = tape.parameter(Matrix::Ones(1, 1));
  tape.clear();
  EXPECT_THROW(p.value(), std::logic_error);
}

TEST(Backward, ForeignTapeRejected) {
  Tape a, b;
  Var x = a.parameter(Matrix::Ones(1, 1));
  Var y = b.parameter(Matrix::Ones(1, 1));
  EXPECT_THROW(gd::add(x, y), std::logic_error);
}

TEST(Backward, NonFiniteValueNamesOperation) {
  Tape tape;
  Var p = tape.parameter(Matrix::Constant(1, 1, -1.0));
  try {
    gd::log(p);
    FAIL() << "expected NumericError";
  } catch (const gd::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Backward, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.parameter(Matrix::Ones(2, 2));
  Var b = tape.parameter(Matrix::Ones(2, 3));
  EXPECT_THROW(gd::add(a, b), gd::ShapeError);
  EXPECT_THROW(gd::matmul(b, b), gd::ShapeError);
}

TEST(FiniteDiff, SquareAtThree) {
  auto f = [](Tape&, std::span<const Var> p) { return gd::sum(gd::mul(p[0], p[0])); };
  const auto r = gd::finite_diff_check_detailed(f, {Matrix::Constant(1, 1, 3.0)});
  EXPECT_NEAR(r.analytic, 6.0, 1e-15);
  EXPECT_NEAR(r.numeric, 6.0, 1e-8);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(FiniteDiff, SmoothPrimitivesMatchToOneInAMillion) {
  loqa::Rng rng(7);
  const Matrix proj = random_matrix(3, 4, rng);
  const Matrix x = random_matrix(3, 4, rng);
  const Matrix pos = (x.array().abs() + 0.5).matrix();
  struct Case {
    const char* name;
    std::function<Var(const Var&)> op;
    Matrix at;
  };
  const std::vector<Case> cases = {
      {"sigmoid", [](const Var& v) { return gd::sigmoid(v); }, x},
      {"tanh", [](const Var& v) { return gd::tanh(v); }, x},
      {"exp", [](const Var& v) { return gd::exp(v); }, x},
      {"log", [](const Var& v) { return gd::log(v); }, pos},
      {"log_softmax", [](const Var& v) { return gd::log_softmax(v); }, x},
      {"softmax", [](const Var& v) { return gd::softmax(v); }, x},
      {"square", [](const Var& v) { return gd::mul(v, v); }, x},
      {"discounted_cumsum", [](const Var& v) { return gd::discounted_cumsum(v, 0.9); }, x},
  };
  for (const Case& c : cases) {
    EXPECT_LT(gd::finite_diff_check(unary(c.op, proj), {c.at}, 1e-5), 1e-6) << c.name;
  }
}

TEST(FiniteDiff, HuberAwayFromKink) {
  // |x| in {0.3, 2.5}: both branches, never near |x| = 1.
  const Matrix x = (Matrix(1, 4) << 0.3, -0.3, 2.5, -2.5).finished();
  const Matrix proj = (Matrix(1, 4) << 1.0, 0.7, -0.4, 2.0).finished();
  auto op = [](const Var& v) { return gd::huber(v); };
  EXPECT_LT(gd::finite_diff_check(unary(op, proj), {x}, 1e-5), 1e-6);
}

TEST(FiniteDiff, HuberValuesWithUnitDelta) {
  Tape tape;
  Var x = tape.constant((Matrix(1, 3) << 0.5, -2.0, 1.0).finished());
  const Matrix h = gd::huber(x).value();
  EXPECT_DOUBLE_EQ(h(0, 0), 0.125);
  EXPECT_DOUBLE_EQ(h(0, 1), 1.5);
  EXPECT_DOUBLE_EQ(h(0, 2), 0.5);
}

TEST(FiniteDiff, StructuralPrimitives) {
  loqa::Rng rng(5);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng), row = random_matrix(1, 2, rng);
  const std::vector<int> idx = {1, 0, 3};
  auto f = [&](Tape& t, std::span<const Var> p) {
    Var y = gd::affine(p[0], p[1], p[2]);                    // 3 x 2
    Var z = gd::concat_cols({y, gd::slice_cols(p[0], 1, 2)});  // 3 x 4
    Var picked = gd::pick(z, idx);                            // 3 x 1
    Var rep = gd::repeat_cols(picked, 3);
    Var lse = gd::logsumexp_rows(z);
    return gd::add(gd::mean(gd::mul(rep, rep)), gd::sum(gd::sum_cols(gd::mul(lse, t.constant(Matrix::Ones(3, 1))))));
  };
  EXPECT_LT(gd::finite_diff_check(f, {a, b, row}, 1e-5), 1e-6);
}

TEST(FiniteDiff, SoftmaxCrossEntropy) {
  loqa::Rng rng(17);
  const std::vector<int> labels = {0, 2, 1, 2, 0};
  auto f = [&](Tape&, std::span<const Var> p) { return gd::neg(gd::mean(gd::pick(gd::log_softmax(p[0]), labels))); };
  EXPECT_LT(gd::finite_diff_check(f, {random_matrix(5, 3, rng, 2.0)}), 1e-6);
}

TEST(FiniteDiff, RandomGruCellLoss) {
  loqa::Rng rng(23);
  const int in = 3, h = 2, B = 4;
  const Matrix x0 = random_matrix(B, in, rng), x1 = random_matrix(B, in, rng);
  std::vector<Matrix> params = {random_matrix(in, 3 * h, rng), random_matrix(1, 3 * h, rng), random_matrix(h, 3 * h, rng),
                                random_matrix(1, 3 * h, rng), random_matrix(h, 1, rng)};
  auto f = [&](Tape& t, std::span<const Var> p) {
    Var hid = t.constant(Matrix::Zero(B, h));
    for (const Matrix& x : {x0, x1}) hid = loqa::agents::gru_cell(t.constant(x), hid, p[0], p[1], p[2], p[3]);
    Var out = gd::matmul(hid, p[4]);
    return gd::mean(gd::mul(out, out));
  };
  EXPECT_LT(gd::finite_diff_check(f, params), 1e-4);
}

TEST(Properties, ForwardIsDeterministic) {
  loqa::Rng rng(1);
  const Matrix x = random_matrix(5, 6, rng), w = random_matrix(6, 3, rng);
  auto run = [&] {
    Tape t;
    return gd::log_softmax(gd::tanh(gd::matmul(t.constant(x), t.constant(w)))).value();
  };
  const Matrix a = run(), b = run();
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())));
}

TEST(Properties, BackwardIsLinearInLoss) {
  loqa::Rng rng(9);
  const Matrix p0 = random_matrix(2, 3, rng);
  const double alpha = 1.7, beta = -0.4;
  auto grad_of = [&](std::function<Var(const Var&)> loss) {
    Tape t;
    Var p = t.parameter(p0);
    t.backward(loss(p));
    return t.grad(p);
  };
  auto f = [](const Var& p) { return gd::sum(gd::sigmoid(p)); };
  auto g = [](const Var& p) { return gd::mean(gd::mul(p, p)); };
  const Matrix combo = grad_of([&](const Var& p) { return gd::add(gd::scale(f(p), alpha), gd::scale(g(p), beta)); });
  const Matrix sep = alpha * grad_of(f) + beta * grad_of(g);
  EXPECT_LT((combo - sep).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Properties, LogSoftmaxIsStableForHugeLogits) {
  Tape t;
  Var x = t.constant((Matrix(1, 2) << 1000.0, 0.0).finished());
  const Matrix lp = gd::log_softmax(x).value();
  EXPECT_DOUBLE_EQ(lp(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(lp(0, 1), -1000.0);
}

TEST(Properties, BackwardResetsEarlierGradients) {
  Tape t;
  Var p = t.parameter(Matrix::Constant(1, 1, 2.0));
  Var l1 = gd::mul(p, p);
  t.backward(l1);
  t.backward(l1);
  EXPECT_DOUBLE_EQ(t.grad(p)(0, 0), 4.0);
}
