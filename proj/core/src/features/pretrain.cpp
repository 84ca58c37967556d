#include "mfn/features/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mfn/diff/adam.hpp"
#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "mfn/train/metrics.hpp"

namespace mfn::features {
namespace {

struct VanillaModel {
  TrainableTables tables;
  diff::Mlp mlp;

  VanillaModel(const Vocabulary& vocab, const VanillaPretrainConfig& config, diff::Rng& rng)
      : tables(make_trainable(EmbeddingTables::random(vocab, config.dim, rng), "vanilla")),
        mlp("vanilla.mlp", 2 * config.dim, {config.hidden}, 1, rng) {}

  std::vector<diff::Parameter*> parameters() {
    std::vector<diff::Parameter*> out;
    for (auto& t : tables) out.push_back(&t);
    mlp.collect(out);
    return out;
  }

  diff::Var probabilities(diff::Tape& tape, std::span<const synth::LabeledExample> corpus,
                          std::span<const std::size_t> batch) {
    const FieldSpec all = FieldSpec::all();
    std::vector<diff::Var> rows;
    rows.reserve(batch.size());
    for (std::size_t idx : batch) {
      const auto& ex = corpus[idx];
      diff::Var history = diff::mean_rows(embed_items(tape, tables, ex.seq.items, all));
      diff::Var cand = embed_items(tape, tables, std::span(&ex.cand, 1), all);
      rows.push_back(diff::concat_cols({history, cand}));
    }
    return diff::sigmoid(mlp.apply(tape, diff::concat_rows(rows)));
  }
};

}  // namespace

VanillaPretrainResult pretrain_fixed_embeddings(std::span<const synth::LabeledExample> corpus,
                                                const Vocabulary& vocab, const VanillaPretrainConfig& config) {
  if (corpus.empty()) throw InputError("pretrain_fixed_embeddings: empty corpus");
  if (config.batch_size == 0) throw ConfigError("pretrain_fixed_embeddings: batch size must be positive");
  for (const auto& ex : corpus) {
    if (ex.seq.empty()) throw InputError("pretrain_fixed_embeddings: example with empty behavior sequence");
  }

  diff::Rng rng(config.seed);
  VanillaModel model(vocab, config, rng);
  const auto params = model.parameters();
  const diff::AdamConfig adam{config.lr};

  VanillaPretrainResult result;
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  std::vector<std::size_t> batch;
  std::vector<double> labels;
  for (std::size_t step = 0; step < config.steps; ++step) {
    batch.clear();
    labels.clear();
    while (batch.size() < std::min(config.batch_size, corpus.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor]);
      labels.push_back(static_cast<double>(corpus[order[cursor]].label));
      ++cursor;
    }
    diff::Tape tape;
    diff::Var loss = diff::binary_cross_entropy(model.probabilities(tape, corpus, batch), labels);
    result.loss_curve.push_back(loss.value()(0, 0));
    tape.backward(loss);
    diff::adam_step(params, adam);
  }

  std::vector<double> scores;
  std::vector<int> truth;
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < corpus.size(); start += kChunk) {
    std::vector<std::size_t> chunk(std::min(kChunk, corpus.size() - start));
    std::iota(chunk.begin(), chunk.end(), start);
    diff::Tape tape;
    const diff::Matrix& p = model.probabilities(tape, corpus, chunk).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      scores.push_back(p(i, 0));
      truth.push_back(corpus[chunk[i]].label);
    }
  }
  try {
    result.train_auc = train::auc(scores, truth);
  } catch (const UndefinedMetricError&) {
    result.train_auc = std::numeric_limits<double>::quiet_NaN();
  }

  result.tables = snapshot(model.tables);
  return result;
}

}  // namespace mfn::features
