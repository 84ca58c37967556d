#include <benchmark/benchmark.h>

#include <random>

#include "mfn/centers/centers.hpp"
#include "mfn/diff/matrix.hpp"
#include "mfn/model/mfn.hpp"
#include "mfn/synth/world.hpp"
#include "mfn/train/metrics.hpp"

using namespace mfn;

namespace {

diff::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  diff::Rng rng(seed);
  return diff::normal_matrix(r, c, 1.0, rng);
}

struct ModelSetup {
  synth::WorldConfig wc;
  synth::Dataset data;
  model::MfnModel model;

  static ModelSetup make() {
    synth::WorldConfig wc;
    wc.users = 64;
    wc.train_per_user = 4;
    wc.test_per_user = 0;
    auto data = synth::generate_dataset(synth::generate_world(wc), wc).train;
    model::MfnConfig cfg;
    cfg.users = wc.users;
    cfg.contexts = wc.contexts;
    cfg.vocab = wc.vocabulary();
    diff::Rng rng(1);
    auto fixed = features::EmbeddingTables::random(cfg.vocab, cfg.dim, rng);
    std::vector<centers::InterestCenters> c;
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) c.push_back(centers::random_centers(4, cfg.dim, 0.3, i));
    return ModelSetup{wc, std::move(data), model::MfnModel(cfg, std::move(fixed), std::move(c), 2)};
  }
};

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(diff::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

static void BM_MfnForward(benchmark::State& state) {
  auto s = ModelSetup::make();
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(s.model.forward(s.data[i++ % s.data.size()]));
}
BENCHMARK(BM_MfnForward);

static void BM_MfnTrainStep(benchmark::State& state) {
  auto s = ModelSetup::make();
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  std::vector<const synth::LabeledExample*> batch;
  for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(&s.data[i % s.data.size()]);
  const auto params = s.model.parameters();
  for (auto _ : state) {
    diff::Tape tape;
    auto loss = s.model.loss(tape, batch);
    tape.backward(loss);
    for (auto* p : params) p->zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_MfnTrainStep)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 50);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = level(rng);
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(train::auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);
BENCHMARK_MAIN();
