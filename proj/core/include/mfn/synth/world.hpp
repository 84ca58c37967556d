#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mfn/features/embedding.hpp"
#include "mfn/features/item.hpp"
#include "mfn/synth/example.hpp"

namespace mfn::synth {

struct WorldConfig {
  std::size_t items = 2000;
  std::size_t categories = 40;
  std::size_t shops = 80;
  std::size_t brands = 80;
  std::size_t entities = 160;
  std::size_t contexts = 4;
  std::size_t archetypes = 8;  // G
  std::size_t users = 2000;    // M
  std::size_t seq_len = 20;    // N
  std::size_t train_per_user = 16;
  std::size_t test_per_user = 4;
  // Users hold between 1 and max_interests archetypes, and never all of them
  // unless positive_rate is 1 (negatives come from the complement).
  std::size_t max_interests = 3;
  // Probability that a user's second interest is the partner archetype of the
  // first, which plants co-occurrence (combination) structure.
  double combo_rate = 0.6;
  // Probability that an item's shop/brand comes from its archetype's
  // preferred set instead of uniformly at random.
  double affinity = 0.8;
  double positive_rate = 0.5;
  double noise_rate = 0.1;
  std::uint64_t seed = 1;

  // Throws ConfigError for empty vocabularies, rates outside [0,1], or
  // vocabularies too small to give each archetype its own slice.
  void validate() const;
  features::Vocabulary vocabulary() const;
  DataShape shape() const;
};

// One latent interest: a slice of categories and entities plus preferred
// shops and brands. Entity and category slices of different archetypes are
// disjoint.
struct Archetype {
  std::vector<std::uint32_t> categories;
  std::vector<std::uint32_t> entities;
  std::vector<std::uint32_t> shops;
  std::vector<std::uint32_t> brands;
  std::uint32_t partner = 0;

  friend bool operator==(const Archetype&, const Archetype&) = default;
};

struct Catalog {
  std::vector<features::ItemRecord> items;  // indexed by iid
  std::vector<std::uint32_t> item_archetype;
  std::vector<Archetype> archetypes;
  std::vector<std::vector<std::uint32_t>> items_by_archetype;
  features::Vocabulary vocab;

  friend bool operator==(const Catalog&, const Catalog&) = default;
};

struct LatentUser {
  std::uint32_t id = 0;
  std::vector<double> mixture;  // over archetypes, sums to 1

  std::vector<std::uint32_t> active() const;
  friend bool operator==(const LatentUser&, const LatentUser&) = default;
};

struct World {
  Catalog catalog;
  std::vector<LatentUser> users;
};

World generate_world(const WorldConfig& config);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Per user: one length-N history sampled from the mixture, then labelled
// candidates. Positives come from the user's archetypes, negatives from the
// complement; labels are flipped with probability noise_rate. Train and test
// candidates of a user never share an item.
DatasetSplit generate_dataset(const World& world, const WorldConfig& config);

// Fixed tables where every id of archetype a sits at mean_a + N(0, spread^2)
// per coordinate, with archetype means at distance `separation` from the
// origin along random unit directions. Items follow their own archetype; every
// other id follows the archetype whose slice owns it. Used for
// center-recovery experiments.
features::EmbeddingTables gaussian_archetype_tables(const Catalog& catalog, std::size_t dim, double separation,
                                                   double spread, std::uint64_t seed);

// Oracle score: the user's mixture weight on the candidate's archetype.
double oracle_score(const World& world, const LabeledExample& example);

}  // namespace mfn::synth
