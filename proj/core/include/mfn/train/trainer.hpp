#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mfn/diff/adam.hpp"
#include "mfn/model/ctr_model.hpp"
#include "mfn/synth/example.hpp"
#include "mfn/train/metrics.hpp"

namespace mfn::train {

struct TrainConfig {
  diff::AdamConfig adam;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  // Stops early once this many optimizer steps have run.
  std::optional<std::size_t> max_steps;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // one entry per optimizer step
  std::size_t steps = 0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Mini-batch Adam over the examples, reshuffled (seeded) at every epoch. The
// last batch of an epoch may be short.
TrainResult train(model::CtrModel& model, std::span<const synth::LabeledExample> examples, const TrainConfig& config,
                  const StepCallback& on_step = {});

// AUC and mean logloss of the model's scores; throws UndefinedMetricError when
// the examples hold a single class.
Metrics evaluate(model::CtrModel& model, std::span<const synth::LabeledExample> examples);

// "step,loss" CSV, steps counted from 1.
void write_loss_curve(std::ostream& out, std::span<const double> losses);

}  // namespace mfn::train
