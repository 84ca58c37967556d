#include "mfn/train/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "mfn/errors.hpp"

namespace mfn::train {

TrainResult train(model::CtrModel& model, std::span<const synth::LabeledExample> examples, const TrainConfig& config,
                  const StepCallback& on_step) {
  if (config.batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (!(config.adam.lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  TrainResult result;
  if (examples.empty()) throw InputError("train: no training examples");

  const auto params = model.parameters();
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(examples.size());
  std::vector<const synth::LabeledExample*> batch;
  const std::size_t limit = config.max_steps.value_or(SIZE_MAX);
  for (std::size_t epoch = 0; epoch < config.epochs && result.steps < limit; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size() && result.steps < limit; start += config.batch_size) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[order[i]]);
      diff::Tape tape;
      diff::Var loss = model.loss(tape, batch);
      const double value = loss.value()(0, 0);
      tape.backward(loss);
      diff::adam_step(params, config.adam);
      result.loss_curve.push_back(value);
      ++result.steps;
      if (on_step) on_step(result.steps, value);
    }
  }
  return result;
}

Metrics evaluate(model::CtrModel& model, std::span<const synth::LabeledExample> examples) {
  const std::vector<double> scores = model.score(examples);
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);
  Metrics m;
  m.auc = auc(scores, labels);
  m.logloss = logloss(scores, labels);
  m.n_examples = examples.size();
  return m;
}

void write_loss_curve(std::ostream& out, std::span<const double> losses) {
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, losses[i]);
    out << buf;
  }
}

}  // namespace mfn::train
