#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mfn/diff/adam.hpp"
#include "mfn/diff/gradcheck.hpp"
#include "mfn/diff/matrix.hpp"
#include "mfn/diff/nn.hpp"
#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "oracles.hpp"

using namespace mfn;
using diff::Matrix;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix x = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(diff::matmul(Matrix::identity(2), x), x);
}

TEST(Matmul, RowTimesColumn) {
  const Matrix out = diff::matmul(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0}, {5}}));
  ASSERT_EQ(out.rows(), 1u);
  ASSERT_EQ(out.cols(), 1u);
  EXPECT_EQ(out(0, 0), 0.0);
}

TEST(Matmul, MatchesTripleLoopBitForBit) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = oracle::random_matrix(3 + trial % 4, 4 + trial % 3, rng);
    const Matrix b = oracle::random_matrix(a.cols(), 2 + trial % 5, rng);
    EXPECT_EQ(diff::matmul(a, b), oracle::triple_loop_matmul(a, b));
    EXPECT_EQ(diff::matmul_bt(a, oracle::transposed(b)), oracle::triple_loop_matmul(a, b));
    EXPECT_EQ(diff::matmul_at(oracle::transposed(a), b), oracle::triple_loop_matmul(a, b));
  }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    diff::matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Softmax, Examples) {
  const Matrix a = diff::softmax_rows(Matrix::from_rows({{0, 0}}));
  EXPECT_EQ(a(0, 0), 0.5);
  EXPECT_EQ(a(0, 1), 0.5);
  const Matrix b = diff::softmax_rows(Matrix::from_rows({{1000, 1000}}));
  EXPECT_EQ(b(0, 0), 0.5);
  EXPECT_EQ(b(0, 1), 0.5);
  const Matrix c = diff::softmax_rows(Matrix::from_rows({{0, std::log(3.0)}}));
  EXPECT_NEAR(c(0, 0), 0.25, 1e-12);
  EXPECT_NEAR(c(0, 1), 0.75, 1e-12);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> shift(-500.0, 500.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double scale = trial % 5 == 0 ? 300.0 : 3.0;
    const Matrix x = oracle::random_matrix(1 + trial % 7, 1 + trial % 9, rng, scale);
    const Matrix p = diff::softmax_rows(x);
    Matrix shifted = x;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const double c = shift(rng);
      for (double& v : shifted.row(r)) v += c;
    }
    const Matrix q = diff::softmax_rows(shifted);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        s += p(r, c);
        EXPECT_NEAR(p(r, c), q(r, c), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Swish, Examples) {
  const Matrix y = diff::swish(Matrix::from_rows({{0.0, 20.0, 1.0}}));
  EXPECT_EQ(y(0, 0), 0.0);
  EXPECT_NEAR(y(0, 1), 20.0, 1e-6);
  EXPECT_NEAR(y(0, 2), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(y(0, 2), 0.731059, 1e-6);
}

TEST(Backward, SumGivesOnes) {
  diff::Parameter p("p", Matrix::from_rows({{1, -2, 3}, {0.5, 4, -1}}));
  diff::Tape tape;
  tape.backward(diff::sum(tape.parameter(p)));
  for (double g : p.grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwiceValue) {
  diff::Parameter p("p", Matrix::from_rows({{1, -2, 3}, {0.5, 4, -1}}));
  diff::Tape tape;
  const auto x = tape.parameter(p);
  tape.backward(diff::sum(diff::hadamard(x, x)));
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_EQ(p.grad.data()[i], 2.0 * p.value.data()[i]);
}

TEST(Backward, NonScalarIsContractError) {
  diff::Parameter p("p", Matrix(2, 2, 1.0));
  diff::Tape tape;
  EXPECT_THROW(tape.backward(tape.parameter(p)), ContractError);
}

TEST(Backward, FrozenParameterGetsNoGradient) {
  diff::Parameter p("p", Matrix(2, 2, 1.0));
  diff::Parameter q("q", Matrix(2, 2, 2.0));
  q.frozen = true;
  diff::Tape tape;
  tape.backward(diff::sum(diff::hadamard(tape.parameter(p), tape.parameter(q))));
  for (double g : p.grad.data()) EXPECT_EQ(g, 2.0);
  for (double g : q.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, QuadraticIsExact) {
  std::mt19937_64 rng(5);
  diff::Parameter p("p", oracle::random_matrix(4, 3, rng));
  const Matrix a = oracle::random_matrix(3, 3, rng);
  const diff::LossBuilder f = [&](diff::Tape& t) {
    const auto x = t.parameter(p);
    const auto y = diff::matmul(x, t.constant(a));
    return diff::sum(diff::hadamard(y, x));
  };
  EXPECT_LT(diff::finite_diff_check(f, p, 1e-5).max_relative_error, 1e-7);
}

TEST(GradCheck, SwishChain) {
  std::mt19937_64 rng(6);
  diff::Parameter p("p", oracle::random_matrix(5, 4, rng));
  const diff::LossBuilder f = [&](diff::Tape& t) {
    return diff::sum(diff::swish(diff::swish(diff::swish(t.parameter(p)))));
  };
  EXPECT_LT(diff::finite_diff_check(f, p, 1e-5).max_relative_error, 1e-6);
}

TEST(GradCheck, FivePointStencilOnSmoothChain) {
  std::mt19937_64 rng(7);
  diff::Parameter p("p", oracle::random_matrix(3, 4, rng));
  const Matrix w = oracle::random_matrix(4, 4, rng);
  const diff::LossBuilder f = [&](diff::Tape& t) {
    const auto h = diff::softmax_rows(diff::matmul(diff::swish(t.parameter(p)), t.constant(w)));
    return diff::sum(diff::hadamard(h, h));
  };
  diff::GradCheckOptions options;
  options.stencil = diff::Stencil::five_point;
  EXPECT_LT(diff::finite_diff_check(f, p, 1e-3, options).max_relative_error, 1e-7);
}

TEST(GradCheck, EveryPrimitive) {
  std::mt19937_64 rng(8);
  diff::Parameter a("a", oracle::random_matrix(3, 4, rng));
  diff::Parameter b("b", oracle::random_matrix(4, 3, rng));
  diff::Parameter row("row", oracle::random_matrix(1, 4, rng));
  const std::vector<double> labels{1, 0, 1, 0};
  const diff::LossBuilder f = [&](diff::Tape& t) {
    const auto x = t.parameter(a);
    const auto y = t.parameter(b);
    const auto r = t.parameter(row);
    const auto xy = diff::matmul(x, y);                              // 3x3
    const auto sm = diff::softmax_rows(diff::add(xy, diff::transpose(xy)));
    const auto mixed = diff::matmul_bt(diff::add_row(x, r), diff::transpose(y));  // 3x3
    const auto g = diff::matmul_at(sm, diff::sub(mixed, diff::scale(xy, 0.5)));
    const auto pooled = diff::mean_rows(diff::concat_cols({g, diff::slice_cols(x, 1, 1)}));  // 1x4
    const auto stacked = diff::concat_rows({pooled, diff::repeat_row(r, 2)});
    const auto probs = diff::sigmoid(diff::slice_cols(diff::transpose(stacked), 0, 1));  // 4x1
    const auto bce = diff::binary_cross_entropy(probs, labels);
    const auto logs = diff::sum(diff::log_clamped(diff::softmax_rows(x), 1e-12));
    return diff::add(bce, diff::scale(logs, 0.01));
  };
  for (diff::Parameter* p : {&a, &b, &row}) {
    EXPECT_LT(diff::finite_diff_check(f, *p, 1e-5).max_relative_error, 1e-6) << p->name;
  }
}

TEST(GradCheck, RejectsEpsilonOutOfRange) {
  diff::Parameter p("p", Matrix(1, 1, 1.0));
  const diff::LossBuilder f = [&](diff::Tape& t) { return diff::sum(t.parameter(p)); };
  EXPECT_THROW(diff::finite_diff_check(f, p, 1e-2), ContractError);
  EXPECT_THROW(diff::finite_diff_check(f, p, 1e-8), ContractError);
}

TEST(GradCheck, DetectsNondeterministicForward) {
  diff::Parameter p("p", Matrix(1, 1, 1.0));
  int calls = 0;
  const diff::LossBuilder f = [&](diff::Tape& t) {
    return diff::scale(diff::sum(t.parameter(p)), 1.0 + 1e-9 * ++calls);
  };
  EXPECT_THROW(diff::finite_diff_check(f, p, 1e-5), DeterminismError);
}

TEST(GradCheck, RestoresValueAndGradient) {
  std::mt19937_64 rng(9);
  diff::Parameter p("p", oracle::random_matrix(3, 3, rng));
  p.grad.fill(7.0);
  const Matrix before = p.value;
  const diff::LossBuilder f = [&](diff::Tape& t) { return diff::sum(diff::swish(t.parameter(p))); };
  diff::finite_diff_check(f, p, 1e-5);
  EXPECT_EQ(p.value, before);
  for (double g : p.grad.data()) EXPECT_EQ(g, 7.0);
}

TEST(Adam, ZeroGradientLeavesValue) {
  diff::Parameter p("p", Matrix::from_rows({{1.5, -2.0}}));
  diff::Parameter* ps[] = {&p};
  diff::adam_step(ps, diff::AdamConfig{});
  EXPECT_EQ(p.value, Matrix::from_rows({{1.5, -2.0}}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  diff::Parameter p("p", Matrix::from_rows({{1.0, 1.0, 1.0}}));
  p.grad = Matrix::from_rows({{3.0, -0.02, 1e-3}});
  diff::Parameter* ps[] = {&p};
  const diff::AdamConfig cfg{};
  diff::adam_step(ps, cfg);
  const double expected_sign[] = {-1.0, 1.0, -1.0};
  for (int i = 0; i < 3; ++i) {
    const double delta = p.value(0, i) - 1.0;
    EXPECT_LE(std::abs(delta), cfg.lr * (1.0 + 1e-6));
    EXPECT_GT(std::abs(delta), cfg.lr * 0.9);
    EXPECT_EQ(std::signbit(delta), std::signbit(expected_sign[i]));
  }
}

TEST(Adam, MatchesScalarTrace) {
  const diff::AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
  const double x0[] = {0.3, -1.2};
  const double g1[] = {0.5, -2.0};
  const double g2[] = {0.7, 0.1};
  diff::Parameter p("p", Matrix::from_rows({{x0[0], x0[1]}}));
  diff::Parameter* ps[] = {&p};
  p.grad = Matrix::from_rows({{g1[0], g1[1]}});
  diff::adam_step(ps, cfg);
  p.grad = Matrix::from_rows({{g2[0], g2[1]}});
  diff::adam_step(ps, cfg);
  for (int i = 0; i < 2; ++i) {
    oracle::ScalarAdam o{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
    double x = o.step(x0[i], g1[i]);
    x = o.step(x, g2[i]);
    EXPECT_NEAR(p.value(0, i), x, 1e-15);
  }
  for (double g : p.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(Adam, FrozenParameterUntouched) {
  diff::Parameter p("p", Matrix(1, 2, 1.0));
  p.frozen = true;
  p.grad.fill(5.0);
  diff::Parameter* ps[] = {&p};
  diff::adam_step(ps, diff::AdamConfig{});
  EXPECT_EQ(p.value, Matrix(1, 2, 1.0));
}

TEST(Determinism, SameSeedSameMlpOutput) {
  auto run = [] {
    diff::Rng rng(42);
    diff::Mlp mlp("m", 5, {7, 3}, 1, rng);
    diff::Tape tape;
    std::mt19937_64 data(1);
    return diff::swish(mlp.apply(tape, tape.constant(oracle::random_matrix(4, 5, data)))).value();
  };
  EXPECT_EQ(run(), run());
}
