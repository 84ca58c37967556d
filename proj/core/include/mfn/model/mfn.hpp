#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfn/centers/centers.hpp"
#include "mfn/diff/nn.hpp"
#include "mfn/features/embedding.hpp"
#include "mfn/model/checkpoint_io.hpp"
#include "mfn/model/ctr_model.hpp"

namespace mfn::model {

struct ChannelConfig {
  features::FieldSpec fields{features::Field::cid};
  std::size_t num_interests = 4;  // K

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

struct MfnConfig {
  std::size_t dim = 16;     // d
  std::size_t hidden = 32;  // d_h
  std::size_t heads = 2;
  std::vector<ChannelConfig> channels{{features::FieldSpec{features::Field::cid}, 4},
                                      {features::FieldSpec{features::Field::entities}, 4}};
  std::vector<std::size_t> head_hidden{64, 32};
  bool use_combination = true;
  bool finetune_centers = false;
  double aux_weight = 0.0;  // lambda on the entropy auxiliary term
  std::size_t users = 1;
  std::size_t contexts = 1;
  features::Vocabulary vocab;

  // Throws ConfigError on inconsistent settings (h must divide d, ...).
  void validate() const;

  // Flat key=value view used for checkpoint headers.
  std::map<std::string, std::string> to_map() const;
  static MfnConfig from_map(const std::map<std::string, std::string>& values);
};

// Scaled dot-product self-attention with per-head projections and an output
// projection. No positional encoding, residual or normalization.
struct MsaParams {
  std::size_t heads = 1;
  std::vector<diff::Parameter> query;  // heads x (d x d/h)
  std::vector<diff::Parameter> key;
  std::vector<diff::Parameter> value;
  diff::Parameter output;  // d x d

  MsaParams() = default;
  MsaParams(const std::string& name, std::size_t dim, std::size_t heads, diff::Rng& rng);
  void collect(std::vector<diff::Parameter*>& out);
};

struct ChannelParams {
  features::FieldSpec fields{features::Field::cid};
  centers::InterestCenters centers;
  MsaParams msa;
  diff::Parameter w1;  // d_h x d
  diff::Parameter w2;  // d_h x K
  diff::Mlp agg_sim;   // 2d -> d_h -> 1
  diff::Mlp agg_comb;

  ChannelParams() = default;
  ChannelParams(const std::string& name, const MfnConfig& config, features::FieldSpec fields,
                centers::InterestCenters centers, diff::Rng& rng);
  std::size_t K() const noexcept { return centers.K(); }
  void collect(std::vector<diff::Parameter*>& out, bool include_centers);
};

// Rows 0..K-1 of the stacked 2K x d interest matrix come from the similarity
// path, rows K..2K-1 from the combination path (absent when that path is off).
struct InterestMatrix {
  diff::Var similarity;
  diff::Var combination;

  bool has_combination() const noexcept { return combination.valid(); }
  diff::Var stacked() const;
};

struct CombinationResult {
  diff::Var interests;  // R_c, K x d
  diff::Var weights;    // A, K x N, rows are distributions over behaviors
};

struct AggregationResult {
  diff::Var output;        // 1 x d
  diff::Var sim_weights;   // w1, 1 x K
  diff::Var comb_weights;  // w2, 1 x K (invalid without the combination path)
};

// R_s = softmax_rows(E C^T)^T * E_trainable.
diff::Matrix similarity_interests(const diff::Matrix& seq_fixed, const diff::Matrix& seq_trainable,
                                  const centers::InterestCenters& centers);
diff::Var similarity_interests(diff::Tape& tape, diff::Var seq_fixed, diff::Var seq_trainable,
                               centers::InterestCenters& centers, diff::Var* probs_out = nullptr);

diff::Var msa(diff::Tape& tape, diff::Var x, MsaParams& params);

// A = softmax over behaviors of W2^T swish(W1 MSA(E)^T); R_c = A E.
CombinationResult combination_interests(diff::Tape& tape, diff::Var seq_trainable, ChannelParams& params);

// w1 = softmax_j a1([r_j, i_c]) over the similarity rows, w2 likewise over the
// combination rows; output = sum_j w1_j r_j + sum_j w2_j r_{K+j}.
AggregationResult aggregate(diff::Tape& tape, const InterestMatrix& interests, diff::Var candidate,
                            ChannelParams& params);

// Every softmax distribution produced while scoring one example.
struct ForwardTrace {
  struct Channel {
    diff::Matrix P;   // N x K
    diff::Matrix A;   // K x N
    diff::Matrix R_s;
    diff::Matrix R_c;
    diff::Matrix w1;  // 1 x K
    diff::Matrix w2;  // 1 x K
    diff::Matrix output;
  };
  std::vector<Channel> channels;
  double probability = 0.5;
};

class MfnModel final : public CtrModel {
 public:
  // `centers` holds one entry per configured channel, matching its K and d.
  MfnModel(MfnConfig config, features::EmbeddingTables fixed, std::vector<centers::InterestCenters> centers,
           std::uint64_t seed);

  // Rebuilds a model written by save(); scoring is bit-identical.
  static MfnModel from_checkpoint(const CheckpointData& data);

  std::string kind() const override { return "mfn"; }
  const MfnConfig& config() const noexcept { return config_; }

  diff::Var predict(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch) override;
  diff::Var loss(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch) override;
  std::vector<diff::Parameter*> parameters() override;
  void save(std::ostream& out) const override;

  // Probability for one example; fills `trace` when given.
  double forward(const synth::LabeledExample& example, ForwardTrace* trace = nullptr);

  features::EmbeddingBundle& embeddings() noexcept { return bundle_; }
  const features::EmbeddingBundle& embeddings() const noexcept { return bundle_; }
  std::vector<ChannelParams>& channels() noexcept { return channels_; }
  const std::vector<ChannelParams>& channels() const noexcept { return channels_; }
  diff::Parameter& user_table() noexcept { return user_table_; }
  diff::Mlp& head() noexcept { return head_; }


 private:
  struct ExampleVars {
    diff::Var head_input;  // 1 x W
    diff::Var aux_loss;    // 1 x 1, sum of channel l_e terms (only with aux_weight > 0)
  };
  ExampleVars build_example(diff::Tape& tape, const synth::LabeledExample& ex, ForwardTrace* trace);
  diff::Var head_probabilities(diff::Tape& tape, std::span<const diff::Var> rows);

  MfnConfig config_;
  features::EmbeddingBundle bundle_;
  diff::Parameter user_table_;
  std::vector<ChannelParams> channels_;
  diff::Mlp head_;
};

// Cross entropy of the batch plus lambda * mean entropy auxiliary term.
diff::Var batch_loss(diff::Tape& tape, MfnModel& model, std::span<const synth::LabeledExample* const> batch);

}  // namespace mfn::model
