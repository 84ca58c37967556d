#include "mfn/features/embedding.hpp"

#include <cmath>

#include "mfn/diff/ops.hpp"
#include "mfn/errors.hpp"

namespace mfn::features {

Vocabulary EmbeddingTables::vocabulary() const {
  return Vocabulary{table(Field::iid).rows(), table(Field::cid).rows(), table(Field::sid).rows(),
                    table(Field::bid).rows(), table(Field::entities).rows()};
}

EmbeddingTables EmbeddingTables::random(const Vocabulary& vocab, std::size_t dim, diff::Rng& rng) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  EmbeddingTables t;
  t.dim = dim;
  const double limit = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Field f : kAllFields) t.table(f) = diff::uniform_matrix(vocab.size_of(f), dim, limit, rng);
  return t;
}

TrainableTables make_trainable(const EmbeddingTables& init, const std::string& prefix) {
  TrainableTables out;
  for (Field f : kAllFields) {
    out[field_index(f)] = diff::Parameter(prefix + "." + std::string(field_token(f)), init.table(f));
  }
  return out;
}

EmbeddingTables snapshot(const TrainableTables& tables) {
  EmbeddingTables t;
  t.dim = tables[0].cols();
  for (Field f : kAllFields) t.table(f) = tables[field_index(f)].value;
  return t;
}

EmbeddingBundle::EmbeddingBundle(EmbeddingTables fixed, const EmbeddingTables& trainable_init)
    : fixed_(std::move(fixed)), trainable_(make_trainable(trainable_init, "trainable")) {
  if (fixed_.dim != trainable_init.dim || fixed_.vocabulary() != trainable_init.vocabulary()) {
    throw DimensionError("fixed and trainable embedding tables must share vocabulary and dimension");
  }
}

void EmbeddingBundle::collect(std::vector<diff::Parameter*>& out) {
  for (auto& p : trainable_) out.push_back(&p);
}

namespace {

const diff::Matrix& table_of(const EmbeddingBundle& bundle, Field f, Which which) {
  return which == Which::fixed ? bundle.fixed().table(f) : bundle.trainable()[field_index(f)].value;
}

void check_id(Field f, std::uint32_t id, std::size_t vocab) {
  if (id >= vocab) {
    throw LookupError("id out of vocabulary: field " + std::string(field_token(f)) + " id " + std::to_string(id) +
                      " (vocabulary size " + std::to_string(vocab) + ")");
  }
}

}  // namespace

std::vector<double> embed_item(const EmbeddingBundle& bundle, const ItemRecord& item, const FieldSpec& spec,
                               Which which) {
  std::vector<double> out(bundle.dim(), 0.0);
  auto add_row = [&](Field f, std::uint32_t id, double weight) {
    const diff::Matrix& table = table_of(bundle, f, which);
    check_id(f, id, table.rows());
    auto row = table.row(id);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += weight * row[j];
  };
  if (spec.contains(Field::iid)) add_row(Field::iid, item.iid, 1.0);
  if (spec.contains(Field::cid)) add_row(Field::cid, item.cid, 1.0);
  if (spec.contains(Field::sid)) add_row(Field::sid, item.sid, 1.0);
  if (spec.contains(Field::bid)) add_row(Field::bid, item.bid, 1.0);
  if (spec.contains(Field::entities) && !item.entities.empty()) {
    const double w = 1.0 / static_cast<double>(item.entities.size());
    for (auto e : item.entities) add_row(Field::entities, e, w);
  }
  return out;
}

diff::Matrix embed_sequence(const EmbeddingBundle& bundle, const BehaviorSequence& seq, const FieldSpec& spec,
                            Which which) {
  if (seq.empty()) throw ContractError("embed_sequence: empty behavior sequence");
  diff::Matrix out(seq.size(), bundle.dim());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto row = embed_item(bundle, seq.items[t], spec, which);
    std::copy(row.begin(), row.end(), out.row(t).begin());
  }
  return out;
}

diff::SparseRows field_rows(std::span<const ItemRecord> items, Field field, std::size_t vocab_size) {
  diff::SparseRows rows;
  rows.offsets.reserve(items.size() + 1);
  for (const ItemRecord& item : items) {
    switch (field) {
      case Field::iid: check_id(field, item.iid, vocab_size); rows.add(item.iid, 1.0); break;
      case Field::cid: check_id(field, item.cid, vocab_size); rows.add(item.cid, 1.0); break;
      case Field::sid: check_id(field, item.sid, vocab_size); rows.add(item.sid, 1.0); break;
      case Field::bid: check_id(field, item.bid, vocab_size); rows.add(item.bid, 1.0); break;
      case Field::entities:
        if (!item.entities.empty()) {
          const double w = 1.0 / static_cast<double>(item.entities.size());
          for (auto e : item.entities) {
            check_id(field, e, vocab_size);
            rows.add(e, w);
          }
        }
        break;
    }
    rows.finish_row();
  }
  return rows;
}

namespace {

template <typename GatherFn>
diff::Var embed_fields(std::span<const ItemRecord> items, const FieldSpec& spec, GatherFn gather) {
  if (items.empty()) throw ContractError("embed_items: no items");
  diff::Var out;
  for (Field f : spec.fields()) {
    diff::Var part = gather(f);
    out = out.valid() ? diff::add(out, part) : part;
  }
  return out;
}

}  // namespace

diff::Var embed_items(diff::Tape& tape, TrainableTables& tables, std::span<const ItemRecord> items,
                      const FieldSpec& spec) {
  return embed_fields(items, spec, [&](Field f) {
    diff::Parameter& table = tables[field_index(f)];
    return tape.gather(table, field_rows(items, f, table.rows()));
  });
}

diff::Var embed_items(diff::Tape& tape, const EmbeddingTables& tables, std::span<const ItemRecord> items,
                      const FieldSpec& spec) {
  return embed_fields(items, spec, [&](Field f) {
    const diff::Matrix& table = tables.table(f);
    return tape.gather(table, field_rows(items, f, table.rows()));
  });
}

diff::Var embed_items(diff::Tape& tape, EmbeddingBundle& bundle, std::span<const ItemRecord> items,
                      const FieldSpec& spec, Which which) {
  return which == Which::fixed ? embed_items(tape, bundle.fixed(), items, spec)
                               : embed_items(tape, bundle.trainable(), items, spec);
}

}  // namespace mfn::features
