#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfn/features/embedding.hpp"
#include "mfn/synth/example.hpp"

namespace mfn::features {

struct VanillaPretrainConfig {
  std::size_t dim = 16;
  std::size_t hidden = 32;
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

struct VanillaPretrainResult {
  EmbeddingTables tables;
  std::vector<double> loss_curve;
  // Train AUC of the vanilla model after the final step (NaN if undefined).
  double train_auc = 0.0;
};

// Fits a vanilla Embedding&MLP CTR model, sigmoid(MLP([mean_t e(i_t); e(i_c)])),
// where e sums all item fields, and returns its embedding tables for use as the
// fixed table. Zero steps returns the seeded initialization.
VanillaPretrainResult pretrain_fixed_embeddings(std::span<const synth::LabeledExample> corpus,
                                                const Vocabulary& vocab, const VanillaPretrainConfig& config);

}  // namespace mfn::features
