#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mfn/centers/centers.hpp"
#include "mfn/features/pretrain.hpp"
#include "mfn/model/mfn.hpp"
#include "mfn/synth/example.hpp"
#include "mfn/train/metrics.hpp"
#include "mfn/train/trainer.hpp"

namespace mfn::train {

// base: mean-pool Embedding&MLP. mfn_no_pretrain: seeded random-normal
// centers, still frozen. mfn_no_combination: similarity path only.
enum class Variant { base, mfn, mfn_no_pretrain, mfn_no_combination };

std::string_view variant_name(Variant v) noexcept;
// Throws ConfigError on unknown names.
Variant parse_variant(std::string_view name);
std::vector<Variant> parse_variants(std::string_view comma_list);

struct PipelineConfig {
  // Architecture; users, contexts and vocab are taken from the data shape.
  model::MfnConfig model;
  features::VanillaPretrainConfig embed;
  // K is taken per channel from `model`.
  centers::CenterPretrainConfig centers;
  TrainConfig train;
};

// Independent stream for each pipeline stage, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

// Fixed-table embedding of the first sequence seen for every user.
std::vector<diff::Matrix> center_corpus(std::span<const synth::LabeledExample> examples,
                                        const features::EmbeddingTables& fixed, const features::FieldSpec& fields);

// Seeded N(0, rms^2) centers per channel, rms taken over that channel's corpus.
std::vector<centers::InterestCenters> random_channel_centers(std::span<const synth::LabeledExample> train,
                                                             const features::EmbeddingTables& fixed,
                                                             const PipelineConfig& config, std::uint64_t seed);

struct Pretrained {
  features::EmbeddingTables fixed;
  std::vector<centers::InterestCenters> centers;      // one per channel
  std::vector<centers::InterestCenters> random;       // same shapes, random normal
};

Pretrained pretrain(std::span<const synth::LabeledExample> train, const synth::DataShape& shape,
                    const PipelineConfig& config, std::uint64_t seed, std::ostream* log = nullptr);

model::MfnConfig model_config(const PipelineConfig& config, const synth::DataShape& shape);

// `pretrained` may be null for the base variant.
std::unique_ptr<model::CtrModel> build_model(Variant variant, const synth::DataShape& shape,
                                             const Pretrained* pretrained, const PipelineConfig& config,
                                             std::uint64_t seed);

struct CompareRow {
  std::string variant;
  std::string seed;  // decimal seed, or "mean"
  double auc = 0.5;
  double logloss = 0.0;
  double rela_impr_pct = 0.0;
};

struct CompareTable {
  std::vector<CompareRow> rows;
};

// Per seed: pretrain, train and score Base first, then every other variant.
// RelaImpr is measured against the Base model of the same seed; with more than
// one seed every listed variant also gets a "mean" row (mean AUC, mean
// logloss, mean RelaImpr).
CompareTable compare(std::span<const Variant> variants, std::span<const synth::LabeledExample> train,
                     std::span<const synth::LabeledExample> test, const synth::DataShape& shape,
                     std::span<const std::uint64_t> seeds, const PipelineConfig& config,
                     std::ostream* log = nullptr);

// Header "variant,seed,auc,logloss,rela_impr_pct".
void write_compare_csv(std::ostream& out, const CompareTable& table);
void write_compare_text(std::ostream& out, const CompareTable& table);

}  // namespace mfn::train
