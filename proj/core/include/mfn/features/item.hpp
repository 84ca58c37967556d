#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mfn::features {

enum class Field : std::uint8_t { iid, cid, sid, bid, entities };

inline constexpr std::size_t kFieldCount = 5;
inline constexpr std::array<Field, kFieldCount> kAllFields{Field::iid, Field::cid, Field::sid, Field::bid,
                                                           Field::entities};

constexpr std::size_t field_index(Field f) noexcept { return static_cast<std::size_t>(f); }

// Token prefix used in embedding files: iid, cid, sid, bid, entity.
std::string_view field_token(Field f) noexcept;
// Accepts the token prefix and "entities".
std::optional<Field> parse_field(std::string_view name) noexcept;

struct ItemRecord {
  std::uint32_t iid = 0;
  std::uint32_t cid = 0;
  std::uint32_t sid = 0;
  std::uint32_t bid = 0;
  std::vector<std::uint32_t> entities;

  friend bool operator==(const ItemRecord&, const ItemRecord&) = default;
};

// Items in interaction-time order.
struct BehaviorSequence {
  std::vector<ItemRecord> items;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
  friend bool operator==(const BehaviorSequence&, const BehaviorSequence&) = default;
};

// Nonempty subset of fields a channel embeds.
class FieldSpec {
 public:
  FieldSpec(std::initializer_list<Field> fields);
  static FieldSpec all();
  // "cid", "cid+entities", ...
  static FieldSpec parse(std::string_view text);

  bool contains(Field f) const noexcept { return (mask_ >> field_index(f)) & 1U; }
  std::vector<Field> fields() const;
  std::string to_string() const;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;

 private:
  explicit FieldSpec(std::uint8_t mask);
  std::uint8_t mask_ = 0;
};

struct Vocabulary {
  std::size_t items = 0;
  std::size_t categories = 0;
  std::size_t shops = 0;
  std::size_t brands = 0;
  std::size_t entities = 0;

  std::size_t size_of(Field f) const noexcept;
  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;
};

// Throws LookupError naming the field and id if any id is outside `vocab`.
void validate_item(const ItemRecord& item, const Vocabulary& vocab);

}  // namespace mfn::features
