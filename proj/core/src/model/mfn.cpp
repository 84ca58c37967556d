#include "mfn/model/mfn.hpp"

#include <cmath>
#include <ostream>

#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "mfn/model/checkpoint_io.hpp"
#include "config_util.hpp"

namespace mfn::model {

using diff::Matrix;
using diff::Parameter;
using diff::Tape;
using diff::Var;

using detail::format_double;
using detail::join_sizes;
using detail::require;
using detail::split;
using detail::to_double;
using detail::to_size;

void MfnConfig::validate() const {
  if (dim == 0 || hidden == 0) throw ConfigError("d and d_h must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("number of heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(dim) + ")");
  }
  if (channels.empty()) throw ConfigError("at least one channel is required");
  for (const auto& c : channels) {
    if (c.num_interests == 0) throw ConfigError("every channel needs K >= 1");
  }
  if (users == 0 || contexts == 0) throw ConfigError("user and context counts must be positive");
  if (aux_weight < 0.0) throw ConfigError("auxiliary weight must be non-negative");
}

std::map<std::string, std::string> MfnConfig::to_map() const {
  std::string ch;
  for (const auto& c : channels) {
    if (!ch.empty()) ch += ',';
    ch += c.fields.to_string() + ":" + std::to_string(c.num_interests);
  }
  return {
      {"dim", std::to_string(dim)},
      {"hidden", std::to_string(hidden)},
      {"heads", std::to_string(heads)},
      {"channels", ch},
      {"head_hidden", join_sizes(head_hidden)},
      {"use_combination", use_combination ? "1" : "0"},
      {"finetune_centers", finetune_centers ? "1" : "0"},
      {"aux_weight", format_double(aux_weight)},
      {"users", std::to_string(users)},
      {"contexts", std::to_string(contexts)},
      {"vocab.items", std::to_string(vocab.items)},
      {"vocab.categories", std::to_string(vocab.categories)},
      {"vocab.shops", std::to_string(vocab.shops)},
      {"vocab.brands", std::to_string(vocab.brands)},
      {"vocab.entities", std::to_string(vocab.entities)},
  };
}

MfnConfig MfnConfig::from_map(const std::map<std::string, std::string>& values) {
  MfnConfig c;
  c.dim = to_size("dim", require(values, "dim"));
  c.hidden = to_size("hidden", require(values, "hidden"));
  c.heads = to_size("heads", require(values, "heads"));
  c.channels.clear();
  for (const auto& part : split(require(values, "channels"), ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("channel '" + part + "' must be '<fields>:<K>'");
    c.channels.push_back({features::FieldSpec::parse(part.substr(0, colon)), to_size("channels", part.substr(colon + 1))});
  }
  c.head_hidden.clear();
  for (const auto& part : split(require(values, "head_hidden"), ',')) c.head_hidden.push_back(to_size("head_hidden", part));
  c.use_combination = require(values, "use_combination") == "1";
  c.finetune_centers = require(values, "finetune_centers") == "1";
  c.aux_weight = to_double("aux_weight", require(values, "aux_weight"));
  c.users = to_size("users", require(values, "users"));
  c.contexts = to_size("contexts", require(values, "contexts"));
  c.vocab.items = to_size("vocab.items", require(values, "vocab.items"));
  c.vocab.categories = to_size("vocab.categories", require(values, "vocab.categories"));
  c.vocab.shops = to_size("vocab.shops", require(values, "vocab.shops"));
  c.vocab.brands = to_size("vocab.brands", require(values, "vocab.brands"));
  c.vocab.entities = to_size("vocab.entities", require(values, "vocab.entities"));
  c.validate();
  return c;
}

MsaParams::MsaParams(const std::string& name, std::size_t dim, std::size_t heads_, diff::Rng& rng) : heads(heads_) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("number of heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(dim) + ")");
  }
  const std::size_t head_dim = dim / heads;
  const double limit = std::sqrt(6.0 / static_cast<double>(dim + head_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string tag = name + ".h" + std::to_string(h);
    query.emplace_back(tag + ".q", diff::uniform_matrix(dim, head_dim, limit, rng));
    key.emplace_back(tag + ".k", diff::uniform_matrix(dim, head_dim, limit, rng));
    value.emplace_back(tag + ".v", diff::uniform_matrix(dim, head_dim, limit, rng));
  }
  output = Parameter(name + ".o", diff::uniform_matrix(dim, dim, std::sqrt(3.0 / static_cast<double>(dim)), rng));
}

void MsaParams::collect(std::vector<Parameter*>& out) {
  for (std::size_t h = 0; h < heads; ++h) {
    out.push_back(&query[h]);
    out.push_back(&key[h]);
    out.push_back(&value[h]);
  }
  out.push_back(&output);
}

ChannelParams::ChannelParams(const std::string& name, const MfnConfig& config, features::FieldSpec fields_,
                             centers::InterestCenters centers_, diff::Rng& rng)
    : fields(fields_), centers(std::move(centers_)) {
  const std::size_t d = config.dim, dh = config.hidden, k = centers.K();
  if (centers.dim() != d) {
    throw DimensionError("channel " + name + ": centers are " + centers.C.value.shape_string() + " but d = " +
                         std::to_string(d));
  }
  centers.C.name = name + ".centers";
  msa = MsaParams(name + ".msa", d, config.heads, rng);
  w1 = Parameter(name + ".w1", diff::uniform_matrix(dh, d, std::sqrt(6.0 / static_cast<double>(dh + d)), rng));
  w2 = Parameter(name + ".w2", diff::uniform_matrix(dh, k, std::sqrt(6.0 / static_cast<double>(dh + k)), rng));
  // Output biases would be shift-invariant under the group softmax, so the
  // scoring layers have none.
  agg_sim = diff::Mlp(name + ".agg_sim", 2 * d, {dh}, 1, rng, false);
  agg_comb = diff::Mlp(name + ".agg_comb", 2 * d, {dh}, 1, rng, false);
}

void ChannelParams::collect(std::vector<Parameter*>& out, bool include_centers) {
  if (include_centers) out.push_back(&centers.C);
  msa.collect(out);
  out.push_back(&w1);
  out.push_back(&w2);
  agg_sim.collect(out);
  agg_comb.collect(out);
}

Var InterestMatrix::stacked() const {
  return has_combination() ? diff::concat_rows({similarity, combination}) : similarity;
}

Matrix similarity_interests(const Matrix& seq_fixed, const Matrix& seq_trainable,
                            const centers::InterestCenters& centers) {
  if (!seq_fixed.same_shape(seq_trainable)) {
    throw DimensionError("similarity_interests: fixed " + seq_fixed.shape_string() + " vs trainable " +
                         seq_trainable.shape_string());
  }
  return diff::matmul_at(centers::assignment_probs(seq_fixed, centers), seq_trainable);
}

Var similarity_interests(Tape& tape, Var seq_fixed, Var seq_trainable, centers::InterestCenters& centers,
                         Var* probs_out) {
  if (!seq_fixed.value().same_shape(seq_trainable.value())) {
    throw DimensionError("similarity_interests: fixed " + seq_fixed.value().shape_string() + " vs trainable " +
                         seq_trainable.value().shape_string());
  }
  Var P = centers::assignment_probs(tape, seq_fixed, centers);
  if (probs_out) *probs_out = P;
  return diff::matmul_at(P, seq_trainable);
}

Var msa(Tape& tape, Var x, MsaParams& params) {
  const std::size_t d = x.cols();
  if (params.heads == 0 || d % params.heads != 0) {
    throw ConfigError("number of heads (" + std::to_string(params.heads) + ") must divide d (" + std::to_string(d) + ")");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d / params.heads));
  std::vector<Var> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    Var q = diff::matmul(x, tape.parameter(params.query[h]));
    Var k = diff::matmul(x, tape.parameter(params.key[h]));
    Var v = diff::matmul(x, tape.parameter(params.value[h]));
    Var attn = diff::softmax_rows(diff::scale(diff::matmul_bt(q, k), inv_sqrt));
    heads.push_back(diff::matmul(attn, v));
  }
  Var joined = heads.size() == 1 ? heads.front() : diff::concat_cols(heads);
  return diff::matmul(joined, tape.parameter(params.output));
}

CombinationResult combination_interests(Tape& tape, Var seq_trainable, ChannelParams& params) {
  if (seq_trainable.cols() != params.w1.cols()) {
    throw DimensionError("combination_interests: sequence " + seq_trainable.value().shape_string() +
                         " vs W1 " + params.w1.value.shape_string());
  }
  Var h = msa(tape, seq_trainable, params.msa);
  Var hidden = diff::swish(diff::matmul_bt(tape.parameter(params.w1), h));  // d_h x N
  Var A = diff::softmax_rows(diff::matmul_at(tape.parameter(params.w2), hidden));  // K x N
  return {diff::matmul(A, seq_trainable), A};
}

namespace {

// softmax over a group of interest rows scored against the candidate.
std::pair<Var, Var> attend(Tape& tape, Var rows, Var candidate, diff::Mlp& scorer) {
  Var inputs = diff::concat_cols({rows, diff::repeat_row(candidate, rows.rows())});
  Var weights = diff::softmax_rows(diff::transpose(scorer.apply(tape, inputs)));  // 1 x K
  return {diff::matmul(weights, rows), weights};
}

}  // namespace

AggregationResult aggregate(Tape& tape, const InterestMatrix& interests, Var candidate, ChannelParams& params) {
  if (candidate.rows() != 1 || candidate.cols() != interests.similarity.cols()) {
    throw DimensionError("aggregate: candidate " + candidate.value().shape_string() + " vs interests " +
                         interests.similarity.value().shape_string());
  }
  AggregationResult out;
  auto [sim_out, w1] = attend(tape, interests.similarity, candidate, params.agg_sim);
  out.sim_weights = w1;
  out.output = sim_out;
  if (interests.has_combination()) {
    auto [comb_out, w2] = attend(tape, interests.combination, candidate, params.agg_comb);
    out.comb_weights = w2;
    out.output = diff::add(sim_out, comb_out);
  }
  return out;
}

MfnModel::MfnModel(MfnConfig config, features::EmbeddingTables fixed, std::vector<centers::InterestCenters> centers,
                   std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  if (fixed.dim != config_.dim || fixed.vocabulary() != config_.vocab) {
    throw DimensionError("fixed embedding tables do not match the configured vocabulary and d");
  }
  if (centers.size() != config_.channels.size()) {
    throw ConfigError("expected " + std::to_string(config_.channels.size()) + " center matrices, got " +
                      std::to_string(centers.size()));
  }
  diff::Rng rng(seed);
  features::EmbeddingTables trainable_init = features::EmbeddingTables::random(config_.vocab, config_.dim, rng);
  bundle_ = features::EmbeddingBundle(std::move(fixed), trainable_init);
  const double limit = 1.0 / std::sqrt(static_cast<double>(config_.dim));
  user_table_ = Parameter("user", diff::uniform_matrix(config_.users, config_.dim, limit, rng));
  channels_.reserve(config_.channels.size());
  for (std::size_t c = 0; c < config_.channels.size(); ++c) {
    const auto& cc = config_.channels[c];
    if (centers[c].K() != cc.num_interests) {
      throw ConfigError("channel " + std::to_string(c) + " expects K = " + std::to_string(cc.num_interests) +
                        " centers, got " + std::to_string(centers[c].K()));
    }
    channels_.emplace_back("channel" + std::to_string(c), config_, cc.fields, std::move(centers[c]), rng);
    channels_.back().centers.C.frozen = !config_.finetune_centers;
  }
  const std::size_t width = config_.channels.size() * config_.dim + 2 * config_.dim + config_.contexts;
  head_ = diff::Mlp("head", width, config_.head_hidden, 1, rng);
}

std::vector<Parameter*> MfnModel::parameters() {
  std::vector<Parameter*> out;
  bundle_.collect(out);
  out.push_back(&user_table_);
  for (auto& ch : channels_) ch.collect(out, config_.finetune_centers);
  head_.collect(out);
  return out;
}

MfnModel::ExampleVars MfnModel::build_example(Tape& tape, const synth::LabeledExample& ex, ForwardTrace* trace) {
  if (ex.seq.empty()) throw ContractError("mfn forward: empty behavior sequence");
  if (ex.user >= config_.users) {
    throw LookupError("id out of vocabulary: field user id " + std::to_string(ex.user));
  }
  if (ex.ctx >= config_.contexts) {
    throw LookupError("id out of vocabulary: field ctx id " + std::to_string(ex.ctx));
  }
  const std::span<const features::ItemRecord> items(ex.seq.items);
  const std::span<const features::ItemRecord> cand(&ex.cand, 1);

  ExampleVars out;
  std::vector<Var> parts;
  std::vector<Var> aux_terms;
  parts.reserve(channels_.size() + 3);
  for (auto& ch : channels_) {
    Var fixed = features::embed_items(tape, bundle_.fixed(), items, ch.fields);
    Var trainable = features::embed_items(tape, bundle_.trainable(), items, ch.fields);
    Var P;
    InterestMatrix interests;
    interests.similarity = similarity_interests(tape, fixed, trainable, ch.centers, &P);
    CombinationResult comb;
    if (config_.use_combination) {
      comb = combination_interests(tape, trainable, ch);
      interests.combination = comb.interests;
    }
    Var candidate = features::embed_items(tape, bundle_.trainable(), cand, ch.fields);
    AggregationResult agg = aggregate(tape, interests, candidate, ch);
    parts.push_back(agg.output);
    if (config_.aux_weight > 0.0) aux_terms.push_back(centers::entropy_losses(P).l_e);
    if (trace) {
      ForwardTrace::Channel tc;
      tc.P = P.value();
      tc.R_s = interests.similarity.value();
      tc.w1 = agg.sim_weights.value();
      if (config_.use_combination) {
        tc.A = comb.weights.value();
        tc.R_c = comb.interests.value();
        tc.w2 = agg.comb_weights.value();
      }
      tc.output = agg.output.value();
      trace->channels.push_back(std::move(tc));
    }
  }
  diff::SparseRows user_row;
  user_row.add(ex.user, 1.0);
  user_row.finish_row();
  parts.push_back(tape.gather(user_table_, user_row));
  parts.push_back(features::embed_items(tape, bundle_.trainable(), cand, features::FieldSpec::all()));
  Matrix ctx(1, config_.contexts);
  ctx(0, ex.ctx) = 1.0;
  parts.push_back(tape.constant(std::move(ctx)));
  out.head_input = diff::concat_cols(parts);
  if (!aux_terms.empty()) out.aux_loss = diff::sum(diff::concat_rows(aux_terms));
  return out;
}

Var MfnModel::head_probabilities(Tape& tape, std::span<const Var> rows) {
  Var inputs = rows.size() == 1 ? rows.front() : diff::concat_rows(rows);
  return diff::sigmoid(head_.apply(tape, inputs));
}

Var MfnModel::predict(Tape& tape, std::span<const synth::LabeledExample* const> batch) {
  if (batch.empty()) throw ContractError("predict: empty batch");
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const auto* ex : batch) rows.push_back(build_example(tape, *ex, nullptr).head_input);
  return head_probabilities(tape, rows);
}

Var MfnModel::loss(Tape& tape, std::span<const synth::LabeledExample* const> batch) {
  if (batch.empty()) throw ContractError("batch_loss: empty batch");
  std::vector<Var> rows;
  std::vector<Var> aux;
  rows.reserve(batch.size());
  for (const auto* ex : batch) {
    if (ex->label != 0 && ex->label != 1) throw ContractError("batch_loss: labels must be 0 or 1");
    ExampleVars v = build_example(tape, *ex, nullptr);
    rows.push_back(v.head_input);
    if (v.aux_loss.valid()) aux.push_back(v.aux_loss);
  }
  Var total = diff::binary_cross_entropy(head_probabilities(tape, rows), labels_of(batch));
  if (!aux.empty()) {
    Var aux_mean = diff::scale(diff::sum(diff::concat_rows(aux)), 1.0 / static_cast<double>(batch.size()));
    total = diff::add(total, diff::scale(aux_mean, config_.aux_weight));
  }
  return total;
}

double MfnModel::forward(const synth::LabeledExample& example, ForwardTrace* trace) {
  Tape tape;
  if (trace) *trace = ForwardTrace{};
  Var row = build_example(tape, example, trace).head_input;
  const double p = head_probabilities(tape, std::span(&row, 1)).value()(0, 0);
  if (trace) trace->probability = p;
  return p;
}

void MfnModel::save(std::ostream& out) const {
  CheckpointData data;
  data.kind = kind();
  data.config = config_.to_map();
  for (const auto& [k, v] : provenance) data.config["run." + k] = v;
  data.sections.emplace_back("fixed", features::to_token_matrix(bundle_.fixed()));
  data.sections.emplace_back("trainable", features::to_token_matrix(features::snapshot(bundle_.trainable())));
  data.sections.emplace_back("user", features::label_rows(user_table_.value, "user"));
  for (const auto& ch : channels_) {
    detail::add_section(data, ch.centers.C, "center");
    for (std::size_t h = 0; h < ch.msa.heads; ++h) {
      detail::add_section(data, ch.msa.query[h]);
      detail::add_section(data, ch.msa.key[h]);
      detail::add_section(data, ch.msa.value[h]);
    }
    detail::add_section(data, ch.msa.output);
    detail::add_section(data, ch.w1);
    detail::add_section(data, ch.w2);
    detail::add_mlp(data, ch.agg_sim);
    detail::add_mlp(data, ch.agg_comb);
  }
  detail::add_mlp(data, head_);
  write_checkpoint(out, data);
}

MfnModel MfnModel::from_checkpoint(const CheckpointData& data) {
  if (data.kind != "mfn") throw InputError("checkpoint holds a '" + data.kind + "' model, not mfn");
  MfnConfig config = MfnConfig::from_map(data.config);
  std::vector<centers::InterestCenters> centers;
  for (std::size_t c = 0; c < config.channels.size(); ++c) {
    const std::string name = "channel" + std::to_string(c) + ".centers";
    centers.emplace_back(features::unlabel_rows(data.section(name), "center"));
  }
  MfnModel model(config, features::from_token_matrix(data.section("fixed")), std::move(centers), 0);
  const features::EmbeddingTables trainable = features::from_token_matrix(data.section("trainable"));
  for (features::Field f : features::kAllFields) {
    Parameter& p = model.bundle_.trainable()[features::field_index(f)];
    if (!trainable.table(f).same_shape(p.value)) throw DimensionError("checkpoint trainable table shape mismatch");
    p.value = trainable.table(f);
  }
  model.user_table_.value = features::unlabel_rows(data.section("user"), "user");
  if (model.user_table_.value.rows() != config.users || model.user_table_.value.cols() != config.dim) {
    throw DimensionError("checkpoint user table shape mismatch");
  }
  for (auto& ch : model.channels_) {
    for (std::size_t h = 0; h < ch.msa.heads; ++h) {
      detail::restore_section(data, ch.msa.query[h]);
      detail::restore_section(data, ch.msa.key[h]);
      detail::restore_section(data, ch.msa.value[h]);
    }
    detail::restore_section(data, ch.msa.output);
    detail::restore_section(data, ch.w1);
    detail::restore_section(data, ch.w2);
    detail::restore_mlp(data, ch.agg_sim);
    detail::restore_mlp(data, ch.agg_comb);
  }
  detail::restore_mlp(data, model.head_);
  for (const auto& [k, v] : data.config) {
    if (k.rfind("run.", 0) == 0) model.provenance[k.substr(4)] = v;
  }
  return model;
}

Var batch_loss(Tape& tape, MfnModel& model, std::span<const synth::LabeledExample* const> batch) {
  return model.loss(tape, batch);
}

}  // namespace mfn::model
