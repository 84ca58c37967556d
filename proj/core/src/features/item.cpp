#include "mfn/features/item.hpp"

#include "mfn/errors.hpp"

namespace mfn::features {

std::string_view field_token(Field f) noexcept {
  switch (f) {
    case Field::iid: return "iid";
    case Field::cid: return "cid";
    case Field::sid: return "sid";
    case Field::bid: return "bid";
    case Field::entities: return "entity";
  }
  return "?";
}

std::optional<Field> parse_field(std::string_view name) noexcept {
  if (name == "entities") return Field::entities;
  for (Field f : kAllFields) {
    if (field_token(f) == name) return f;
  }
  return std::nullopt;
}

FieldSpec::FieldSpec(std::uint8_t mask) : mask_(mask) {
  if (mask_ == 0) throw ConfigError("field spec must select at least one field");
}

FieldSpec::FieldSpec(std::initializer_list<Field> fields) {
  for (Field f : fields) mask_ |= static_cast<std::uint8_t>(1U << field_index(f));
  if (mask_ == 0) throw ConfigError("field spec must select at least one field");
}

FieldSpec FieldSpec::all() { return FieldSpec(static_cast<std::uint8_t>((1U << kFieldCount) - 1)); }

FieldSpec FieldSpec::parse(std::string_view text) {
  std::uint8_t mask = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('+', start), text.size());
    const auto name = text.substr(start, end - start);
    const auto field = parse_field(name);
    if (!field) throw ConfigError("unknown field '" + std::string(name) + "' in field spec '" + std::string(text) + "'");
    mask |= static_cast<std::uint8_t>(1U << field_index(*field));
    start = end + 1;
  }
  return FieldSpec(mask);
}

std::vector<Field> FieldSpec::fields() const {
  std::vector<Field> out;
  for (Field f : kAllFields) {
    if (contains(f)) out.push_back(f);
  }
  return out;
}

std::string FieldSpec::to_string() const {
  std::string out;
  for (Field f : fields()) {
    if (!out.empty()) out += '+';
    out += f == Field::entities ? std::string("entities") : std::string(field_token(f));
  }
  return out;
}

std::size_t Vocabulary::size_of(Field f) const noexcept {
  switch (f) {
    case Field::iid: return items;
    case Field::cid: return categories;
    case Field::sid: return shops;
    case Field::bid: return brands;
    case Field::entities: return entities;
  }
  return 0;
}

namespace {

void check_id(Field f, std::uint32_t id, const Vocabulary& vocab) {
  if (id >= vocab.size_of(f)) {
    throw LookupError("id out of vocabulary: field " + std::string(field_token(f)) + " id " + std::to_string(id) +
                      " (vocabulary size " + std::to_string(vocab.size_of(f)) + ")");
  }
}

}  // namespace

void validate_item(const ItemRecord& item, const Vocabulary& vocab) {
  check_id(Field::iid, item.iid, vocab);
  check_id(Field::cid, item.cid, vocab);
  check_id(Field::sid, item.sid, vocab);
  check_id(Field::bid, item.bid, vocab);
  for (auto e : item.entities) check_id(Field::entities, e, vocab);
}

}  // namespace mfn::features
