#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mfn/errors.hpp"
#include "mfn/model/base.hpp"
#include "mfn/synth/world.hpp"
#include "mfn/train/metrics.hpp"
#include "mfn/train/pipeline.hpp"
#include "mfn/train/trainer.hpp"
#include "oracles.hpp"

using namespace mfn;

namespace {

struct SmallRun {
  synth::WorldConfig wc;
  synth::DatasetSplit split;
  train::PipelineConfig pc;

  SmallRun() {
    wc.users = 60;
    wc.train_per_user = 8;
    wc.test_per_user = 4;
    wc.seed = 2;
    split = synth::generate_dataset(synth::generate_world(wc), wc);
    pc.model.dim = 4;
    pc.model.hidden = 4;
    pc.model.heads = 1;
    pc.model.channels = {{features::FieldSpec{features::Field::cid}, 2}};
    pc.model.head_hidden = {8};
    pc.embed.dim = 4;
    pc.embed.hidden = 8;
    pc.embed.steps = 20;
    pc.centers.max_iters = 5;
    pc.centers.batch_size = 8;
    pc.train.batch_size = 64;
    pc.train.adam.lr = 3e-3;
  }
};

model::BaseModel small_base(const synth::WorldConfig& wc, std::uint64_t seed) {
  model::BaseConfig bc;
  bc.dim = 4;
  bc.head_hidden = {8};
  bc.users = wc.users;
  bc.contexts = wc.contexts;
  bc.vocab = wc.vocabulary();
  return model::BaseModel(bc, seed);
}

}  // namespace

TEST(Auc, Examples) {
  EXPECT_EQ(train::auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(train::auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
  EXPECT_EQ(train::auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
  EXPECT_EQ(train::auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}), 0.0);
}

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(train::auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(train::auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), UndefinedMetricError);
  EXPECT_THROW(train::auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), Error);
  EXPECT_THROW(train::auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), Error);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> level(0, 9);
    std::vector<double> scores(1000);
    std::vector<int> labels(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
      scores[i] = level(rng) / 10.0;
      labels[i] = static_cast<int>(rng() % 2);
    }
    EXPECT_NEAR(train::auc(scores, labels), oracle::pairwise_auc(scores, labels), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  std::vector<double> scores(500), squashed(500);
  std::vector<int> labels(500);
  for (std::size_t i = 0; i < 500; ++i) {
    scores[i] = n(rng);
    squashed[i] = 1.0 / (1.0 + std::exp(-3.0 * scores[i]));
    labels[i] = n(rng) + scores[i] > 0 ? 1 : 0;
  }
  EXPECT_EQ(train::auc(scores, labels), train::auc(squashed, labels));
}

TEST(RelaImpr, Examples) {
  EXPECT_NEAR(train::rela_impr(0.7, 0.7), 0.0, 1e-9);
  EXPECT_NEAR(train::rela_impr(0.72, 0.70), 10.0, 1e-9);
  EXPECT_NEAR(train::rela_impr(0.6, 0.7), -50.0, 1e-9);
  EXPECT_NEAR(train::rela_impr(0.5, 0.7), -100.0, 1e-9);
  EXPECT_THROW(train::rela_impr(0.7, 0.5), ContractError);
  const auto c = train::compare_auc(0.72, 0.70);
  EXPECT_EQ(c.base_auc, 0.70);
  EXPECT_EQ(c.test_auc, 0.72);
  EXPECT_NEAR(c.rela_impr_percent, 10.0, 1e-9);
}

TEST(RelaImpr, MonotoneInTestAuc) {
  double prev = -1e9;
  for (double a = 0.5; a <= 1.0; a += 0.01) {
    const double r = train::rela_impr(a, 0.68);
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Logloss, Examples) {
  EXPECT_NEAR(train::logloss(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), std::log(2.0), 1e-15);
  EXPECT_NEAR(train::logloss(std::vector<double>{0.9, 0.2}, std::vector<int>{1, 0}), 0.164252, 1e-6);
  EXPECT_LT(train::logloss(std::vector<double>{1.0, 0.0}, std::vector<int>{1, 0}), 1e-11);
  EXPECT_NEAR(train::logloss(std::vector<double>{0.0}, std::vector<int>{1}), -std::log(1e-12), 1e-9);
}

TEST(Trainer, ZeroStepsLeavesInitialization) {
  SmallRun run;
  auto a = small_base(run.wc, 5);
  auto b = small_base(run.wc, 5);
  train::TrainConfig tc;
  tc.max_steps = 0;
  const auto r = train::train(a, run.split.train, tc);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(r.loss_curve.empty());
  EXPECT_EQ(a.score(run.split.test), b.score(run.split.test));
}

TEST(Trainer, StepCountAndCallback) {
  SmallRun run;
  auto m = small_base(run.wc, 5);
  train::TrainConfig tc;
  tc.batch_size = 100;
  tc.epochs = 2;
  std::size_t calls = 0;
  const auto r = train::train(m, run.split.train, tc, [&](std::size_t, double) { ++calls; });
  // 480 examples: 5 batches per epoch, the last one short.
  EXPECT_EQ(r.steps, 10u);
  EXPECT_EQ(calls, 10u);
  tc.max_steps = 3;
  auto m2 = small_base(run.wc, 5);
  EXPECT_EQ(train::train(m2, run.split.train, tc).steps, 3u);
}

TEST(Trainer, LossTrendsDown) {
  synth::WorldConfig wc;
  wc.users = 400;
  wc.train_per_user = 16;
  wc.test_per_user = 0;
  const auto data = synth::generate_dataset(synth::generate_world(wc), wc).train;
  auto m = small_base(wc, 1);
  train::TrainConfig tc;
  tc.batch_size = 32;
  tc.adam.lr = 3e-3;
  tc.max_steps = 200;
  const auto r = train::train(m, data, tc);
  ASSERT_EQ(r.loss_curve.size(), 200u);
  const double first = std::accumulate(r.loss_curve.begin(), r.loss_curve.begin() + 50, 0.0) / 50.0;
  const double last = std::accumulate(r.loss_curve.end() - 50, r.loss_curve.end(), 0.0) / 50.0;
  EXPECT_LT(last, first);
}

TEST(Trainer, SameSeedBitIdentical) {
  SmallRun run;
  auto a = small_base(run.wc, 5);
  auto b = small_base(run.wc, 5);
  train::TrainConfig tc;
  tc.batch_size = 32;
  tc.seed = 11;
  EXPECT_EQ(train::train(a, run.split.train, tc).loss_curve, train::train(b, run.split.train, tc).loss_curve);
  EXPECT_EQ(a.score(run.split.test), b.score(run.split.test));
}

TEST(Trainer, EmptyDataIsInputError) {
  SmallRun run;
  auto m = small_base(run.wc, 5);
  EXPECT_THROW(train::train(m, synth::Dataset{}, train::TrainConfig{}), InputError);
}

TEST(Evaluate, ConstantModelScoresHalf) {
  SmallRun run;
  auto m = small_base(run.wc, 5);
  m.head().final_layer().weight.value.fill(0.0);
  m.head().final_layer().bias.value.fill(0.0);
  const auto metrics = train::evaluate(m, run.split.test);
  EXPECT_EQ(metrics.auc, 0.5);
  EXPECT_NEAR(metrics.logloss, std::log(2.0), 1e-12);
  EXPECT_EQ(metrics.n_examples, run.split.test.size());
}

TEST(Pipeline, DeriveSeedSeparatesStages) {
  EXPECT_EQ(train::derive_seed(1, "model"), train::derive_seed(1, "model"));
  EXPECT_NE(train::derive_seed(1, "model"), train::derive_seed(1, "train"));
  EXPECT_NE(train::derive_seed(1, "model"), train::derive_seed(2, "model"));
}

TEST(Pipeline, VariantNames) {
  for (auto v : {train::Variant::base, train::Variant::mfn, train::Variant::mfn_no_pretrain,
                 train::Variant::mfn_no_combination}) {
    EXPECT_EQ(train::parse_variant(train::variant_name(v)), v);
  }
  EXPECT_THROW(train::parse_variant("din"), ConfigError);
  EXPECT_EQ(train::parse_variants("base,mfn").size(), 2u);
}

TEST(Compare, BaseOnlyGivesZeroImprovement) {
  SmallRun run;
  const train::Variant v[] = {train::Variant::base};
  const std::uint64_t seeds[] = {1};
  const auto table = train::compare(v, run.split.train, run.split.test, run.wc.shape(), seeds, run.pc);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].variant, "base");
  EXPECT_EQ(table.rows[0].rela_impr_pct, 0.0);
  std::ostringstream csv;
  train::write_compare_csv(csv, table);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "variant,seed,auc,logloss,rela_impr_pct");
}

TEST(Compare, SameSeedsSameTable) {
  SmallRun run;
  const train::Variant v[] = {train::Variant::base, train::Variant::mfn, train::Variant::mfn_no_pretrain,
                              train::Variant::mfn_no_combination};
  const std::uint64_t seeds[] = {1, 2};
  const auto a = train::compare(v, run.split.train, run.split.test, run.wc.shape(), seeds, run.pc);
  const auto b = train::compare(v, run.split.train, run.split.test, run.wc.shape(), seeds, run.pc);
  std::ostringstream ca, cb;
  train::write_compare_csv(ca, a);
  train::write_compare_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  // 4 variants x 2 seeds plus 4 mean rows.
  ASSERT_EQ(a.rows.size(), 12u);
  for (const auto& row : a.rows) {
    if (row.variant == "base") EXPECT_NEAR(row.rela_impr_pct, 0.0, 1e-12);
  }
  double mean_auc = 0.0, mean_rela = 0.0;
  for (const auto& row : a.rows) {
    if (row.variant == "mfn" && row.seed != "mean") {
      mean_auc += row.auc / 2.0;
      mean_rela += row.rela_impr_pct / 2.0;
    }
  }
  for (const auto& row : a.rows) {
    if (row.variant == "mfn" && row.seed == "mean") {
      EXPECT_NEAR(row.auc, mean_auc, 1e-15);
      EXPECT_NEAR(row.rela_impr_pct, mean_rela, 1e-12);
    }
  }
}

TEST(Compare, PretrainedCentersAreFrozenInTheModel) {
  SmallRun run;
  const auto pre = train::pretrain(run.split.train, run.wc.shape(), run.pc, 1);
  auto m = train::build_model(train::Variant::mfn, run.wc.shape(), &pre, run.pc, 1);
  for (auto* p : m->parameters()) EXPECT_EQ(p->name.find("centers"), std::string::npos) << p->name;
  train::train(*m, run.split.train, run.pc.train);
  auto& mfn = dynamic_cast<model::MfnModel&>(*m);
  EXPECT_EQ(mfn.channels()[0].centers.C.value, pre.centers[0].C.value);
  EXPECT_EQ(mfn.embeddings().fixed(), pre.fixed);
}
