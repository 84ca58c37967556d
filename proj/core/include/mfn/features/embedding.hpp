#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mfn/diff/nn.hpp"
#include "mfn/diff/tape.hpp"
#include "mfn/features/item.hpp"

namespace mfn::features {

enum class Which { fixed, trainable };

// One d-column table per field, rows indexed by id.
struct EmbeddingTables {
  std::size_t dim = 0;
  std::array<diff::Matrix, kFieldCount> fields;

  const diff::Matrix& table(Field f) const { return fields[field_index(f)]; }
  diff::Matrix& table(Field f) { return fields[field_index(f)]; }
  Vocabulary vocabulary() const;

  // Uniform in [-1/sqrt(d), 1/sqrt(d)].
  static EmbeddingTables random(const Vocabulary& vocab, std::size_t dim, diff::Rng& rng);

  friend bool operator==(const EmbeddingTables&, const EmbeddingTables&) = default;
};

using TrainableTables = std::array<diff::Parameter, kFieldCount>;

TrainableTables make_trainable(const EmbeddingTables& init, const std::string& prefix);
EmbeddingTables snapshot(const TrainableTables& tables);

// The fixed pretrained table E paired with the trainable table. Both cover the
// same vocabulary at the same dimension; the fixed side is never optimized.
class EmbeddingBundle {
 public:
  EmbeddingBundle() = default;
  EmbeddingBundle(EmbeddingTables fixed, const EmbeddingTables& trainable_init);

  std::size_t dim() const noexcept { return fixed_.dim; }
  Vocabulary vocabulary() const { return fixed_.vocabulary(); }
  const EmbeddingTables& fixed() const noexcept { return fixed_; }
  TrainableTables& trainable() noexcept { return trainable_; }
  const TrainableTables& trainable() const noexcept { return trainable_; }

  void collect(std::vector<diff::Parameter*>& out);

 private:
  EmbeddingTables fixed_;
  TrainableTables trainable_;
};

// Sum of the selected field embeddings; the entities field contributes the
// mean of its entity rows (nothing when the item has no entities).
std::vector<double> embed_item(const EmbeddingBundle& bundle, const ItemRecord& item, const FieldSpec& spec,
                               Which which);
diff::Matrix embed_sequence(const EmbeddingBundle& bundle, const BehaviorSequence& seq, const FieldSpec& spec,
                            Which which);

// Tape versions: one row per item. The trainable overloads route gradients
// into the parameter tables; the fixed overload records a constant.
diff::Var embed_items(diff::Tape& tape, TrainableTables& tables, std::span<const ItemRecord> items,
                      const FieldSpec& spec);
diff::Var embed_items(diff::Tape& tape, const EmbeddingTables& tables, std::span<const ItemRecord> items,
                      const FieldSpec& spec);
diff::Var embed_items(diff::Tape& tape, EmbeddingBundle& bundle, std::span<const ItemRecord> items,
                      const FieldSpec& spec, Which which);

// Gather plan for one field over a list of items. Validates ids.
diff::SparseRows field_rows(std::span<const ItemRecord> items, Field field, std::size_t vocab_size);

}  // namespace mfn::features
