#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "mfn/model/base.hpp"
#include "mfn/model/mfn.hpp"
#include "mfn/synth/world.hpp"
#include "mfn/train/model_check.hpp"
#include "mfn/train/trainer.hpp"
#include "oracles.hpp"

using namespace mfn;
using diff::Matrix;
using oracle::triple_loop_matmul;
using oracle::transposed;

namespace {

Matrix softmax_rows_oracle(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto p = oracle::softmax({x.row(r).begin(), x.row(r).end()});
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = p[c];
  }
  return out;
}

Matrix swish_oracle(Matrix x) {
  for (double& v : x.data()) v = oracle::swish(v);
  return x;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c);
    for (std::size_t c = 0; c < b.cols(); ++c) out(r, a.cols() + c) = b(r, c);
  }
  return out;
}

Matrix row_of(const Matrix& m, std::size_t r) { return Matrix(1, m.cols(), {m.row(r).begin(), m.row(r).end()}); }

Matrix mlp_oracle(const diff::Mlp& mlp, Matrix x) {
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    const auto& layer = mlp.layers[i];
    x = triple_loop_matmul(x, layer.weight.value);
    if (layer.has_bias) {
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += layer.bias.value(0, c);
      }
    }
    if (i + 1 < mlp.layers.size()) x = swish_oracle(x);
  }
  return x;
}

Matrix msa_oracle(const Matrix& x, const model::MsaParams& p) {
  const std::size_t d = x.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / p.heads));
  Matrix joined(x.rows(), 0);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const Matrix q = triple_loop_matmul(x, p.query[h].value);
    const Matrix k = triple_loop_matmul(x, p.key[h].value);
    const Matrix v = triple_loop_matmul(x, p.value[h].value);
    Matrix logits = triple_loop_matmul(q, transposed(k));
    for (double& l : logits.data()) l *= scale;
    joined = hcat(joined, triple_loop_matmul(softmax_rows_oracle(logits), v));
  }
  return triple_loop_matmul(joined, p.output.value);
}

// Group-softmax pooling of interest rows against a candidate.
Matrix attend_oracle(const Matrix& rows, const Matrix& cand, const diff::Mlp& scorer, Matrix* weights_out) {
  Matrix scores(1, rows.rows());
  for (std::size_t j = 0; j < rows.rows(); ++j) scores(0, j) = mlp_oracle(scorer, hcat(row_of(rows, j), cand))(0, 0);
  const Matrix w = softmax_rows_oracle(scores);
  if (weights_out) *weights_out = w;
  return triple_loop_matmul(w, rows);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

struct ModelFixture {
  model::MfnConfig config;
  synth::World world;
  synth::WorldConfig wc;
  synth::Dataset data;
  features::EmbeddingTables fixed;
  std::vector<centers::InterestCenters> centers;

  explicit ModelFixture(std::size_t dim = 4, std::size_t heads = 2, std::size_t K = 3, bool two_channels = true) {
    wc.items = 30;
    wc.categories = 6;
    wc.shops = 6;
    wc.brands = 6;
    wc.entities = 12;
    wc.contexts = 3;
    wc.archetypes = 3;
    wc.users = 12;
    wc.seq_len = 5;
    wc.train_per_user = 4;
    wc.test_per_user = 0;
    wc.seed = 21;
    world = synth::generate_world(wc);
    data = synth::generate_dataset(world, wc).train;
    config.dim = dim;
    config.hidden = 5;
    config.heads = heads;
    config.channels = {{features::FieldSpec{features::Field::cid}, K}};
    if (two_channels) config.channels.push_back({features::FieldSpec::parse("entities+bid"), K});
    config.head_hidden = {6, 4};
    config.users = wc.users;
    config.contexts = wc.contexts;
    config.vocab = wc.vocabulary();
    diff::Rng rng(5);
    fixed = features::EmbeddingTables::random(config.vocab, dim, rng);
    for (std::size_t c = 0; c < config.channels.size(); ++c) {
      centers.push_back(centers::random_centers(K, dim, 0.8, 100 + c));
    }
  }

  model::MfnModel make(std::uint64_t seed = 1) const { return model::MfnModel(config, fixed, centers, seed); }
};

// Composes every sub-operation by hand from the model's parameters.
double forward_oracle(model::MfnModel& m, const synth::LabeledExample& ex) {
  const auto& bundle = m.embeddings();
  Matrix head_input(1, 0);
  for (const auto& ch : m.channels()) {
    const Matrix Ef = features::embed_sequence(bundle, ex.seq, ch.fields, features::Which::fixed);
    const Matrix Et = features::embed_sequence(bundle, ex.seq, ch.fields, features::Which::trainable);
    const Matrix P = softmax_rows_oracle(triple_loop_matmul(Ef, transposed(ch.centers.C.value)));
    const Matrix Rs = triple_loop_matmul(transposed(P), Et);
    const Matrix H = msa_oracle(Et, ch.msa);
    const Matrix hidden = swish_oracle(triple_loop_matmul(ch.w1.value, transposed(H)));
    const Matrix A = softmax_rows_oracle(triple_loop_matmul(transposed(ch.w2.value), hidden));
    const Matrix Rc = triple_loop_matmul(A, Et);
    const auto cv = features::embed_item(bundle, ex.cand, ch.fields, features::Which::trainable);
    const Matrix cand(1, cv.size(), cv);
    Matrix out = attend_oracle(Rs, cand, ch.agg_sim, nullptr);
    if (m.config().use_combination) {
      const Matrix oc = attend_oracle(Rc, cand, ch.agg_comb, nullptr);
      for (std::size_t j = 0; j < out.cols(); ++j) out(0, j) += oc(0, j);
    }
    head_input = hcat(head_input, out);
  }
  head_input = hcat(head_input, row_of(m.user_table().value, ex.user));
  const auto all = features::embed_item(bundle, ex.cand, features::FieldSpec::all(), features::Which::trainable);
  head_input = hcat(head_input, Matrix(1, all.size(), all));
  Matrix ctx(1, m.config().contexts);
  ctx(0, ex.ctx) = 1.0;
  head_input = hcat(head_input, ctx);
  const double z = mlp_oracle(m.head(), head_input)(0, 0);
  return 1.0 / (1.0 + std::exp(-z));
}

void zero_final_layer(diff::Mlp& mlp, double bias = 0.0) {
  mlp.final_layer().weight.value.fill(0.0);
  mlp.final_layer().bias.value.fill(bias);
}

}  // namespace

TEST(Similarity, SingleCenterSumsTheSequence) {
  std::mt19937_64 rng(1);
  const Matrix Ef = oracle::random_matrix(4, 3, rng);
  const Matrix Et = oracle::random_matrix(4, 3, rng);
  const Matrix Rs = model::similarity_interests(Ef, Et, centers::InterestCenters(oracle::random_matrix(1, 3, rng)));
  ASSERT_EQ(Rs.rows(), 1u);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < 4; ++t) s += Et(t, j);
    EXPECT_NEAR(Rs(0, j), s, 1e-15);
  }
}

TEST(Similarity, SingleBehaviorRowsAreScaledCopies) {
  std::mt19937_64 rng(2);
  const Matrix Ef = oracle::random_matrix(1, 3, rng);
  const Matrix Et = oracle::random_matrix(1, 3, rng);
  const centers::InterestCenters c(oracle::random_matrix(4, 3, rng));
  const Matrix P = centers::assignment_probs(Ef, c);
  const Matrix Rs = model::similarity_interests(Ef, Et, c);
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(Rs(j, k), P(0, j) * Et(0, k), 1e-15);
  }
}

TEST(Similarity, ThreeBehaviorFixture) {
  const Matrix Ef = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const Matrix Et = Matrix::from_rows({{2, -1}, {0.5, 3}, {-1, 1}});
  const centers::InterestCenters c(Matrix::from_rows({{1, 0}, {0, 2}}));
  // Hand: logits E C^T = [[1,0],[0,2],[1,2]].
  const double e = std::exp(1.0), e2 = std::exp(2.0);
  const double P[3][2] = {{e / (e + 1), 1 / (e + 1)}, {1 / (1 + e2), e2 / (1 + e2)}, {e / (e + e2), e2 / (e + e2)}};
  const Matrix Rs = model::similarity_interests(Ef, Et, c);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double expected = P[0][j] * Et(0, k) + P[1][j] * Et(1, k) + P[2][j] * Et(2, k);
      EXPECT_NEAR(Rs(j, k), expected, 1e-12);
    }
  }
}

TEST(Similarity, ShapeMismatch) {
  EXPECT_THROW(model::similarity_interests(Matrix(3, 2), Matrix(2, 2), centers::InterestCenters(Matrix(2, 2))),
               DimensionError);
}

TEST(Msa, ZeroValueAndOutputGiveZero) {
  diff::Rng rng(3);
  model::MsaParams p("m", 4, 2, rng);
  for (auto& v : p.value) v.value.fill(0.0);
  p.output.value.fill(0.0);
  std::mt19937_64 data(4);
  diff::Tape tape;
  const auto out = model::msa(tape, tape.constant(oracle::random_matrix(5, 4, data)), p);
  for (double v : out.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Msa, SingleBehaviorIsValueThenOutputProjection) {
  diff::Rng rng(5);
  model::MsaParams p("m", 4, 2, rng);
  std::mt19937_64 data(6);
  const Matrix x = oracle::random_matrix(1, 4, data);
  diff::Tape tape;
  const auto out = model::msa(tape, tape.constant(x), p);
  const Matrix joined = hcat(triple_loop_matmul(x, p.value[0].value), triple_loop_matmul(x, p.value[1].value));
  const Matrix expected = triple_loop_matmul(joined, p.output.value);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.value()(0, j), expected(0, j), 1e-15);
}

TEST(Msa, OneHeadHandComputation) {
  diff::Rng rng(7);
  model::MsaParams p("m", 2, 1, rng);
  p.query[0].value = Matrix::from_rows({{1, 0}, {0, 1}});
  p.key[0].value = Matrix::from_rows({{1, 1}, {0, 1}});
  p.value[0].value = Matrix::from_rows({{2, 0}, {1, -1}});
  p.output.value = Matrix::from_rows({{1, 0}, {0.5, 1}});
  const Matrix x = Matrix::from_rows({{1, 2}, {-1, 0.5}});
  // Q = x, K = [[1,3],[-1,-0.5]], V = [[4,-2],[-1.5,-0.5]], scale 1/sqrt(2).
  const double s = 1.0 / std::sqrt(2.0);
  const double l00 = (1 * 1 + 2 * 3) * s, l01 = (1 * -1 + 2 * -0.5) * s;
  const double l10 = (-1 * 1 + 0.5 * 3) * s, l11 = (-1 * -1 + 0.5 * -0.5) * s;
  const double a00 = std::exp(l00) / (std::exp(l00) + std::exp(l01)), a01 = 1 - a00;
  const double a10 = std::exp(l10) / (std::exp(l10) + std::exp(l11)), a11 = 1 - a10;
  const double h00 = a00 * 4 + a01 * -1.5, h01 = a00 * -2 + a01 * -0.5;
  const double h10 = a10 * 4 + a11 * -1.5, h11 = a10 * -2 + a11 * -0.5;
  const double expected[2][2] = {{h00 + 0.5 * h01, h01}, {h10 + 0.5 * h11, h11}};
  diff::Tape tape;
  const auto out = model::msa(tape, tape.constant(x), p);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) EXPECT_NEAR(out.value()(r, c), expected[r][c], 1e-10);
  }
}

TEST(Msa, HeadsMustDivideDim) {
  diff::Rng rng(8);
  EXPECT_THROW(model::MsaParams("m", 4, 3, rng), ConfigError);
  model::MfnConfig cfg;
  cfg.dim = 6;
  cfg.heads = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Combination, SingleBehavior) {
  ModelFixture f;
  auto m = f.make();
  auto& ch = m.channels()[0];
  std::mt19937_64 data(9);
  const Matrix e = oracle::random_matrix(1, f.config.dim, data);
  diff::Tape tape;
  const auto r = model::combination_interests(tape, tape.constant(e), ch);
  ASSERT_EQ(r.weights.rows(), ch.K());
  ASSERT_EQ(r.weights.cols(), 1u);
  for (double a : r.weights.value().data()) EXPECT_EQ(a, 1.0);
  for (std::size_t j = 0; j < ch.K(); ++j) {
    for (std::size_t k = 0; k < e.cols(); ++k) EXPECT_EQ(r.interests.value()(j, k), e(0, k));
  }
}

TEST(Combination, ZeroW2GivesBehaviorMean) {
  ModelFixture f;
  auto m = f.make();
  auto& ch = m.channels()[0];
  ch.w2.value.fill(0.0);
  std::mt19937_64 data(10);
  const Matrix e = oracle::random_matrix(5, f.config.dim, data);
  diff::Tape tape;
  const auto r = model::combination_interests(tape, tape.constant(e), ch);
  for (double a : r.weights.value().data()) EXPECT_NEAR(a, 0.2, 1e-15);
  for (std::size_t j = 0; j < ch.K(); ++j) {
    for (std::size_t k = 0; k < e.cols(); ++k) {
      double mean = 0.0;
      for (std::size_t t = 0; t < 5; ++t) mean += e(t, k) / 5.0;
      EXPECT_NEAR(r.interests.value()(j, k), mean, 1e-14);
    }
  }
}

TEST(Combination, SmallFixtureMatchesHandComputation) {
  ModelFixture f(2, 1, 2, false);
  auto m = f.make(3);
  auto& ch = m.channels()[0];
  const Matrix e = Matrix::from_rows({{0.5, -1}, {1.5, 0.25}, {-0.75, 2}});
  diff::Tape tape;
  const auto r = model::combination_interests(tape, tape.constant(e), ch);
  const Matrix H = msa_oracle(e, ch.msa);
  const Matrix A = softmax_rows_oracle(
      triple_loop_matmul(transposed(ch.w2.value), swish_oracle(triple_loop_matmul(ch.w1.value, transposed(H)))));
  const Matrix Rc = triple_loop_matmul(A, e);
  for (std::size_t i = 0; i < A.size(); ++i) EXPECT_NEAR(r.weights.value().data()[i], A.data()[i], 1e-10);
  for (std::size_t i = 0; i < Rc.size(); ++i) EXPECT_NEAR(r.interests.value().data()[i], Rc.data()[i], 1e-10);
}

TEST(Aggregate, SingleInterestPerGroupSumsThem) {
  ModelFixture f(4, 2, 1);
  auto m = f.make();
  auto& ch = m.channels()[0];
  std::mt19937_64 data(11);
  const Matrix r1 = oracle::random_matrix(1, 4, data), r2 = oracle::random_matrix(1, 4, data);
  diff::Tape tape;
  model::InterestMatrix im{tape.constant(r1), tape.constant(r2)};
  const auto out = model::aggregate(tape, im, tape.constant(oracle::random_matrix(1, 4, data)), ch);
  EXPECT_EQ(out.sim_weights.value()(0, 0), 1.0);
  EXPECT_EQ(out.comb_weights.value()(0, 0), 1.0);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.output.value()(0, j), r1(0, j) + r2(0, j), 1e-15);
}

TEST(Aggregate, IdenticalRowsGiveTwiceTheRow) {
  ModelFixture f;
  auto m = f.make();
  auto& ch = m.channels()[1];
  std::mt19937_64 data(12);
  const Matrix r = oracle::random_matrix(1, 4, data);
  Matrix rows(3, 4);
  for (std::size_t j = 0; j < 3; ++j) std::copy(r.row(0).begin(), r.row(0).end(), rows.row(j).begin());
  diff::Tape tape;
  model::InterestMatrix im{tape.constant(rows), tape.constant(rows)};
  const auto out = model::aggregate(tape, im, tape.constant(oracle::random_matrix(1, 4, data)), ch);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.output.value()(0, j), 2.0 * r(0, j), 1e-14);
}

TEST(Aggregate, TwoInterestFixtureMatchesHandComputation) {
  ModelFixture f(4, 2, 2);
  auto m = f.make(4);
  auto& ch = m.channels()[0];
  std::mt19937_64 data(13);
  const Matrix rs = oracle::random_matrix(2, 4, data), rc = oracle::random_matrix(2, 4, data);
  const Matrix cand = oracle::random_matrix(1, 4, data);
  diff::Tape tape;
  model::InterestMatrix im{tape.constant(rs), tape.constant(rc)};
  const auto out = model::aggregate(tape, im, tape.constant(cand), ch);
  Matrix w1, w2;
  Matrix expected = attend_oracle(rs, cand, ch.agg_sim, &w1);
  const Matrix oc = attend_oracle(rc, cand, ch.agg_comb, &w2);
  for (std::size_t j = 0; j < 4; ++j) expected(0, j) += oc(0, j);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.output.value()(0, j), expected(0, j), 1e-10);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(out.sim_weights.value()(0, j), w1(0, j), 1e-10);
    EXPECT_NEAR(out.comb_weights.value()(0, j), w2(0, j), 1e-10);
  }
}

TEST(Aggregate, OutputDecomposesIntoGroupHulls) {
  ModelFixture f(4, 2, 3);
  auto m = f.make(5);
  auto& ch = m.channels()[0];
  std::mt19937_64 data(14);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix rs = oracle::random_matrix(3, 4, data, 2.0), rc = oracle::random_matrix(3, 4, data, 2.0);
    diff::Tape tape;
    model::InterestMatrix im{tape.constant(rs), tape.constant(rc)};
    const auto out = model::aggregate(tape, im, tape.constant(oracle::random_matrix(1, 4, data)), ch);
    const Matrix& w1 = out.sim_weights.value();
    const Matrix& w2 = out.comb_weights.value();
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_GE(w1(0, j), 0.0);
      EXPECT_GE(w2(0, j), 0.0);
      s1 += w1(0, j);
      s2 += w2(0, j);
    }
    EXPECT_NEAR(s1, 1.0, 1e-12);
    EXPECT_NEAR(s2, 1.0, 1e-12);
    const Matrix comb_part = triple_loop_matmul(w2, rc);
    const Matrix sim_part = triple_loop_matmul(w1, rs);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(out.output.value()(0, j) - comb_part(0, j), sim_part(0, j), 1e-12);
    }
  }
}

TEST(Forward, MatchesComposedHandTrace) {
  ModelFixture f;
  auto m = f.make(6);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(m.forward(f.data[i]), forward_oracle(m, f.data[i]), 1e-10);
  ModelFixture g(4, 1, 2, false);
  auto single = g.make(7);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(single.forward(g.data[i]), forward_oracle(single, g.data[i]), 1e-10);
  }
}

TEST(Forward, WithoutCombinationPath) {
  ModelFixture f;
  f.config.use_combination = false;
  auto m = f.make(8);
  model::ForwardTrace trace;
  const double p = m.forward(f.data[0], &trace);
  EXPECT_NEAR(p, forward_oracle(m, f.data[0]), 1e-10);
  EXPECT_TRUE(trace.channels[0].A.empty());
  EXPECT_TRUE(trace.channels[0].w2.empty());
}

TEST(Forward, ZeroHeadGivesHalf) {
  ModelFixture f;
  auto m = f.make();
  zero_final_layer(m.head());
  for (const auto& ex : f.data) EXPECT_EQ(m.forward(ex), 0.5);
}

TEST(Forward, LabelDoesNotEnter) {
  ModelFixture f;
  auto m = f.make();
  auto a = f.data[3];
  auto b = a;
  a.label = 0;
  b.label = 1;
  EXPECT_EQ(m.forward(a), m.forward(b));
}

TEST(Forward, PredictAgreesWithForward) {
  ModelFixture f;
  auto m = f.make(9);
  std::vector<const synth::LabeledExample*> batch;
  for (std::size_t i = 0; i < 6; ++i) batch.push_back(&f.data[i]);
  diff::Tape tape;
  const auto probs = m.predict(tape, batch);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(probs.value()(i, 0), m.forward(f.data[i]), 1e-15);
}

TEST(Forward, DistributionsSumToOne) {
  ModelFixture f;
  auto m = f.make(10);
  for (const auto& ex : f.data) {
    model::ForwardTrace trace;
    m.forward(ex, &trace);
    for (const auto& ch : trace.channels) {
      for (const Matrix* M : {&ch.P, &ch.A, &ch.w1, &ch.w2}) {
        for (std::size_t r = 0; r < M->rows(); ++r) {
          double s = 0.0;
          for (double v : M->row(r)) s += v;
          EXPECT_NEAR(s, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Forward, PermutingBehaviorsPermutesPAndKeepsInterests) {
  ModelFixture f;
  auto m = f.make(11);
  const auto& ex = f.data[0];
  auto permuted = ex;
  const std::size_t order[] = {3, 0, 4, 1, 2};
  for (std::size_t t = 0; t < 5; ++t) permuted.seq.items[t] = ex.seq.items[order[t]];
  model::ForwardTrace a, b;
  const double pa = m.forward(ex, &a);
  const double pb = m.forward(permuted, &b);
  EXPECT_NEAR(pa, pb, 1e-14);
  for (std::size_t c = 0; c < a.channels.size(); ++c) {
    const auto& ca = a.channels[c];
    const auto& cb = b.channels[c];
    for (std::size_t t = 0; t < 5; ++t) {
      for (std::size_t j = 0; j < ca.P.cols(); ++j) EXPECT_EQ(cb.P(t, j), ca.P(order[t], j));
      for (std::size_t j = 0; j < ca.A.rows(); ++j) EXPECT_NEAR(cb.A(j, t), ca.A(j, order[t]), 1e-14);
    }
    for (std::size_t i = 0; i < ca.R_s.size(); ++i) EXPECT_NEAR(cb.R_s.data()[i], ca.R_s.data()[i], 1e-14);
    for (std::size_t i = 0; i < ca.R_c.size(); ++i) EXPECT_NEAR(cb.R_c.data()[i], ca.R_c.data()[i], 1e-14);
  }
}

TEST(BatchLoss, HalfEverywhereIsLnTwo) {
  ModelFixture f;
  auto m = f.make();
  zero_final_layer(m.head());
  std::vector<const synth::LabeledExample*> batch;
  for (std::size_t i = 0; i < 10; ++i) batch.push_back(&f.data[i]);
  diff::Tape tape;
  EXPECT_NEAR(m.loss(tape, batch).value()(0, 0), std::log(2.0), 1e-15);
}

TEST(BatchLoss, ConstantProbability) {
  ModelFixture f;
  auto m = f.make();
  zero_final_layer(m.head(), logit(0.9));
  auto a = f.data[0];
  auto b = f.data[1];
  a.label = 1;
  b.label = 1;
  const synth::LabeledExample* batch[] = {&a, &b};
  diff::Tape tape;
  EXPECT_NEAR(m.loss(tape, batch).value()(0, 0), -std::log(0.9), 1e-12);
}

TEST(BatchLoss, CrossEntropyArithmetic) {
  diff::Tape tape;
  const auto l = diff::binary_cross_entropy(tape.constant(Matrix::from_rows({{0.9}, {0.2}})), std::vector<double>{1, 0});
  EXPECT_NEAR(l.value()(0, 0), -(std::log(0.9) + std::log(0.8)) / 2.0, 1e-15);
  EXPECT_NEAR(l.value()(0, 0), 0.164252, 1e-6);
  const auto exact = diff::binary_cross_entropy(tape.constant(Matrix::from_rows({{1.0}, {0.0}})), std::vector<double>{1, 0});
  EXPECT_LT(exact.value()(0, 0), 1e-11);
  EXPECT_GE(exact.value()(0, 0), 0.0);
}

TEST(BatchLoss, AuxiliaryTermAddsMeanEntropy) {
  ModelFixture f;
  f.config.aux_weight = 0.5;
  auto with_aux = f.make(12);
  f.config.aux_weight = 0.0;
  auto without = f.make(12);
  std::vector<const synth::LabeledExample*> batch;
  for (std::size_t i = 0; i < 4; ++i) batch.push_back(&f.data[i]);
  double aux = 0.0;
  for (const auto* ex : batch) {
    model::ForwardTrace trace;
    without.forward(*ex, &trace);
    for (const auto& ch : trace.channels) aux += centers::entropy_losses(ch.P).l_e;
  }
  aux /= 4.0;
  diff::Tape t1, t2;
  EXPECT_NEAR(with_aux.loss(t1, batch).value()(0, 0), without.loss(t2, batch).value()(0, 0) + 0.5 * aux, 1e-14);
}

TEST(Gradients, FullModelCheck) {
  const auto r = train::check_model_gradients(train::ModelCheckConfig{}, 1);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_param;
  EXPECT_TRUE(r.frozen_centers_untouched);
  bool saw_centers = false, saw_msa = false;
  for (const auto& p : r.params) {
    saw_centers = saw_centers || p.name.find("centers") != std::string::npos;
    saw_msa = saw_msa || p.name.find("msa") != std::string::npos;
  }
  EXPECT_TRUE(saw_centers);
  EXPECT_TRUE(saw_msa);
}

TEST(Training, FixedTableNeverChanges) {
  ModelFixture f;
  auto m = f.make(13);
  const auto before = m.embeddings().fixed();
  const auto trainable_before = features::snapshot(m.embeddings().trainable());
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.adam.lr = 1e-2;
  train::train(m, f.data, tc);
  EXPECT_EQ(m.embeddings().fixed(), before);
  EXPECT_NE(features::snapshot(m.embeddings().trainable()), trainable_before);
  for (const auto& ch : m.channels()) EXPECT_EQ(ch.centers.C.value, f.centers[&ch - &m.channels()[0]].C.value);
}

TEST(Training, FinetunedCentersMove) {
  ModelFixture f;
  f.config.finetune_centers = true;
  auto m = f.make(14);
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.adam.lr = 1e-2;
  train::train(m, f.data, tc);
  EXPECT_NE(m.channels()[0].centers.C.value, f.centers[0].C.value);
}

TEST(Training, SameSeedSameLossTrajectory) {
  ModelFixture f;
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.seed = 3;
  auto a = f.make(15);
  auto b = f.make(15);
  const auto ra = train::train(a, f.data, tc);
  const auto rb = train::train(b, f.data, tc);
  EXPECT_EQ(ra.loss_curve, rb.loss_curve);
}

TEST(Checkpoint, RoundTripKeepsScoresBitIdentical) {
  ModelFixture f;
  f.config.finetune_centers = true;
  auto m = f.make(16);
  m.provenance["note"] = "x=y";
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.adam.lr = 1e-2;
  train::train(m, f.data, tc);
  std::stringstream buf;
  m.save(buf);
  auto loaded = model::load_model(buf);
  ASSERT_EQ(loaded->kind(), "mfn");
  EXPECT_EQ(loaded->provenance.at("note"), "x=y");
  EXPECT_EQ(loaded->score(f.data), m.score(f.data));
  std::stringstream again;
  loaded->save(again);
  EXPECT_EQ(again.str(), buf.str());
}

TEST(Checkpoint, BaseRoundTrip) {
  ModelFixture f;
  model::BaseConfig bc;
  bc.dim = 4;
  bc.head_hidden = {5};
  bc.users = f.config.users;
  bc.contexts = f.config.contexts;
  bc.vocab = f.config.vocab;
  model::BaseModel m(bc, 3);
  train::TrainConfig tc;
  tc.batch_size = 8;
  tc.adam.lr = 1e-2;
  train::train(m, f.data, tc);
  std::stringstream buf;
  m.save(buf);
  auto loaded = model::load_model(buf);
  ASSERT_EQ(loaded->kind(), "base");
  EXPECT_EQ(loaded->score(f.data), m.score(f.data));
}

TEST(Checkpoint, UnknownKindIsInputError) {
  std::stringstream buf("mfn-checkpoint 1 mystery\n@config\n");
  EXPECT_THROW(model::load_model(buf), Error);
}

TEST(Construction, CenterShapeMustMatchChannel) {
  ModelFixture f;
  auto centers = f.centers;
  centers[1] = centers::random_centers(2, f.config.dim, 1.0, 3);
  EXPECT_THROW(model::MfnModel(f.config, f.fixed, centers, 1), ConfigError);
  centers.pop_back();
  EXPECT_THROW(model::MfnModel(f.config, f.fixed, centers, 1), ConfigError);
}

TEST(Construction, OutOfRangeUserIsLookupError) {
  ModelFixture f;
  auto m = f.make();
  auto ex = f.data[0];
  ex.user = 99;
  EXPECT_THROW(m.forward(ex), LookupError);
}
