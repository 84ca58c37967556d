#include "mfn/model/base.hpp"

#include <cmath>
#include <fstream>
#include <istream>

#include "config_util.hpp"
#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"
#include "mfn/model/mfn.hpp"

namespace mfn::model {

using diff::Matrix;
using diff::Tape;
using diff::Var;

void BaseConfig::validate() const {
  if (dim == 0) throw ConfigError("d must be positive");
  if (users == 0 || contexts == 0) throw ConfigError("user and context counts must be positive");
}

std::map<std::string, std::string> BaseConfig::to_map() const {
  return {
      {"dim", std::to_string(dim)},
      {"head_hidden", detail::join_sizes(head_hidden)},
      {"users", std::to_string(users)},
      {"contexts", std::to_string(contexts)},
      {"vocab.items", std::to_string(vocab.items)},
      {"vocab.categories", std::to_string(vocab.categories)},
      {"vocab.shops", std::to_string(vocab.shops)},
      {"vocab.brands", std::to_string(vocab.brands)},
      {"vocab.entities", std::to_string(vocab.entities)},
  };
}

BaseConfig BaseConfig::from_map(const std::map<std::string, std::string>& values) {
  using detail::require;
  using detail::to_size;
  BaseConfig c;
  c.dim = to_size("dim", require(values, "dim"));
  c.head_hidden.clear();
  for (const auto& part : detail::split(require(values, "head_hidden"), ',')) {
    c.head_hidden.push_back(to_size("head_hidden", part));
  }
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

BaseModel::BaseModel(BaseConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  diff::Rng rng(seed);
  tables_ = features::make_trainable(features::EmbeddingTables::random(config_.vocab, config_.dim, rng), "base");
  const double limit = 1.0 / std::sqrt(static_cast<double>(config_.dim));
  user_table_ = diff::Parameter("user", diff::uniform_matrix(config_.users, config_.dim, limit, rng));
  head_ = diff::Mlp("head", 3 * config_.dim + config_.contexts, config_.head_hidden, 1, rng);
}

Var BaseModel::predict(Tape& tape, std::span<const synth::LabeledExample* const> batch) {
  if (batch.empty()) throw ContractError("predict: empty batch");
  const features::FieldSpec all = features::FieldSpec::all();
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const auto* ex : batch) {
    if (ex->seq.empty()) throw ContractError("base forward: empty behavior sequence");
    if (ex->user >= config_.users) throw LookupError("id out of vocabulary: field user id " + std::to_string(ex->user));
    if (ex->ctx >= config_.contexts) throw LookupError("id out of vocabulary: field ctx id " + std::to_string(ex->ctx));
    Var pooled = diff::mean_rows(features::embed_items(tape, tables_, ex->seq.items, all));
    diff::SparseRows user_row;
    user_row.add(ex->user, 1.0);
    user_row.finish_row();
    Var cand = features::embed_items(tape, tables_, std::span(&ex->cand, 1), all);
    Matrix ctx(1, config_.contexts);
    ctx(0, ex->ctx) = 1.0;
    rows.push_back(diff::concat_cols({pooled, tape.gather(user_table_, user_row), cand, tape.constant(std::move(ctx))}));
  }
  Var inputs = rows.size() == 1 ? rows.front() : diff::concat_rows(rows);
  return diff::sigmoid(head_.apply(tape, inputs));
}

std::vector<diff::Parameter*> BaseModel::parameters() {
  std::vector<diff::Parameter*> out;
  for (auto& t : tables_) out.push_back(&t);
  out.push_back(&user_table_);
  head_.collect(out);
  return out;
}

void BaseModel::save(std::ostream& out) const {
  CheckpointData data;
  data.kind = kind();
  data.config = config_.to_map();
  for (const auto& [k, v] : provenance) data.config["run." + k] = v;
  data.sections.emplace_back("trainable", features::to_token_matrix(features::snapshot(tables_)));
  data.sections.emplace_back("user", features::label_rows(user_table_.value, "user"));
  detail::add_mlp(data, head_);
  write_checkpoint(out, data);
}

BaseModel BaseModel::from_checkpoint(const CheckpointData& data) {
  if (data.kind != "base") throw InputError("checkpoint holds a '" + data.kind + "' model, not base");
  BaseModel model(BaseConfig::from_map(data.config), 0);
  const features::EmbeddingTables trainable = features::from_token_matrix(data.section("trainable"));
  for (features::Field f : features::kAllFields) {
    diff::Parameter& p = model.tables_[features::field_index(f)];
    if (!trainable.table(f).same_shape(p.value)) throw DimensionError("checkpoint trainable table shape mismatch");
    p.value = trainable.table(f);
  }
  model.user_table_.value = features::unlabel_rows(data.section("user"), "user");
  if (model.user_table_.value.rows() != model.config_.users || model.user_table_.value.cols() != model.config_.dim) {
    throw DimensionError("checkpoint user table shape mismatch");
  }
  detail::restore_mlp(data, model.head_);
  for (const auto& [k, v] : data.config) {
    if (k.rfind("run.", 0) == 0) model.provenance[k.substr(4)] = v;
  }
  return model;
}

std::unique_ptr<CtrModel> load_model(std::istream& in) {
  const CheckpointData data = read_checkpoint(in);
  if (data.kind == "base") return std::make_unique<BaseModel>(BaseModel::from_checkpoint(data));
  if (data.kind == "mfn") return std::make_unique<MfnModel>(MfnModel::from_checkpoint(data));
  throw InputError("unknown checkpoint kind '" + data.kind + "'");
}

std::unique_ptr<CtrModel> load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  try {
    return load_model(in);
  } catch (const ParseError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void save_model(const CtrModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  model.save(out);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace mfn::model
