#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfn/features/item.hpp"

namespace mfn::synth {

// One CTR record: the user's history, a candidate and the click label.
struct LabeledExample {
  std::uint32_t user = 0;
  features::BehaviorSequence seq;
  // Ground-truth archetype of each behavior; empty for external data.
  std::vector<std::uint32_t> seq_archetypes;
  features::ItemRecord cand;
  std::uint32_t ctx = 0;
  int label = 0;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

using Dataset = std::vector<LabeledExample>;

// Id ranges a model needs to cover a dataset.
struct DataShape {
  features::Vocabulary vocab;
  std::size_t users = 0;
  std::size_t contexts = 0;
};

}  // namespace mfn::synth
