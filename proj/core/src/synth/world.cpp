#include "mfn/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "mfn/diff/nn.hpp"
#include "mfn/errors.hpp"

namespace mfn::synth {
namespace {

using Rng = std::mt19937_64;

std::vector<std::vector<std::uint32_t>> partition(std::size_t n, std::size_t groups, Rng& rng) {
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0U);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::uint32_t>> out(groups);
  for (std::size_t i = 0; i < n; ++i) out[i % groups].push_back(ids[i]);
  for (auto& g : out) std::sort(g.begin(), g.end());
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& values, Rng& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, values.size() - 1);
  return values[dist(rng)];
}

std::uint32_t uniform_id(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(n - 1));
  return dist(rng);
}

bool bernoulli(double p, Rng& rng) { return std::bernoulli_distribution(p)(rng); }

}  // namespace

void WorldConfig::validate() const {
  const std::pair<const char*, std::size_t> counts[] = {
      {"items", items},       {"categories", categories}, {"shops", shops},     {"brands", brands},
      {"entities", entities}, {"contexts", contexts},     {"archetypes", archetypes}, {"users", users},
      {"seq_len", seq_len},   {"max_interests", max_interests}};
  for (const auto& [name, value] : counts) {
    if (value == 0) throw ConfigError(std::string("world config: ") + name + " must be at least 1");
  }
  const std::pair<const char*, double> rates[] = {
      {"combo_rate", combo_rate}, {"affinity", affinity}, {"positive_rate", positive_rate}, {"noise_rate", noise_rate}};
  for (const auto& [name, value] : rates) {
    if (!(value >= 0.0 && value <= 1.0)) throw ConfigError(std::string("world config: ") + name + " must lie in [0, 1]");
  }
  const std::pair<const char*, std::size_t> sliced[] = {
      {"items", items}, {"categories", categories}, {"entities", entities}, {"shops", shops}, {"brands", brands}};
  for (const auto& [name, value] : sliced) {
    if (value < archetypes) {
      throw ConfigError(std::string("world config: ") + name + " vocabulary (" + std::to_string(value) +
                        ") is too small for " + std::to_string(archetypes) + " archetypes");
    }
  }
}

features::Vocabulary WorldConfig::vocabulary() const {
  return features::Vocabulary{items, categories, shops, brands, entities};
}

DataShape WorldConfig::shape() const { return DataShape{vocabulary(), users, contexts}; }

std::vector<std::uint32_t> LatentUser::active() const {
  std::vector<std::uint32_t> out;
  for (std::size_t a = 0; a < mixture.size(); ++a) {
    if (mixture[a] > 0.0) out.push_back(static_cast<std::uint32_t>(a));
  }
  return out;
}

World generate_world(const WorldConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t G = config.archetypes;

  World world;
  Catalog& catalog = world.catalog;
  catalog.vocab = config.vocabulary();
  catalog.archetypes.resize(G);
  const auto cats = partition(config.categories, G, rng);
  const auto ents = partition(config.entities, G, rng);
  const auto shops = partition(config.shops, G, rng);
  const auto brands = partition(config.brands, G, rng);
  for (std::size_t a = 0; a < G; ++a) {
    Archetype& arch = catalog.archetypes[a];
    arch.categories = cats[a];
    arch.entities = ents[a];
    arch.shops = shops[a];
    arch.brands = brands[a];
    const std::size_t partner = a ^ 1U;
    arch.partner = static_cast<std::uint32_t>(partner < G ? partner : a);
  }

  const auto item_groups = partition(config.items, G, rng);
  catalog.items.resize(config.items);
  catalog.item_archetype.resize(config.items);
  catalog.items_by_archetype = item_groups;
  for (std::size_t a = 0; a < G; ++a) {
    const Archetype& arch = catalog.archetypes[a];
    for (std::uint32_t iid : item_groups[a]) {
      features::ItemRecord item;
      item.iid = iid;
      item.cid = pick(arch.categories, rng);
      item.sid = bernoulli(config.affinity, rng) ? pick(arch.shops, rng) : uniform_id(config.shops, rng);
      item.bid = bernoulli(config.affinity, rng) ? pick(arch.brands, rng) : uniform_id(config.brands, rng);
      const std::size_t max_entities = std::min<std::size_t>(3, arch.entities.size());
      const std::size_t n_entities = std::uniform_int_distribution<std::size_t>(1, max_entities)(rng);
      std::sample(arch.entities.begin(), arch.entities.end(), std::back_inserter(item.entities), n_entities, rng);
      catalog.items[iid] = std::move(item);
      catalog.item_archetype[iid] = static_cast<std::uint32_t>(a);
    }
  }

  // Leave at least one archetype outside every user so negatives exist.
  const std::size_t cap = G > 1 && config.positive_rate < 1.0 ? G - 1 : G;
  const std::size_t max_k = std::min(config.max_interests, cap);
  world.users.resize(config.users);
  for (std::size_t u = 0; u < config.users; ++u) {
    LatentUser& user = world.users[u];
    user.id = static_cast<std::uint32_t>(u);
    user.mixture.assign(G, 0.0);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, max_k)(rng);
    std::vector<std::uint32_t> chosen{uniform_id(G, rng)};
    if (k >= 2) {
      const std::uint32_t partner = catalog.archetypes[chosen[0]].partner;
      if (partner != chosen[0] && bernoulli(config.combo_rate, rng)) chosen.push_back(partner);
    }
    while (chosen.size() < k) {
      const std::uint32_t a = uniform_id(G, rng);
      if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) chosen.push_back(a);
    }
    std::uniform_real_distribution<double> weight(0.5, 1.5);
    double total = 0.0;
    for (std::uint32_t a : chosen) total += user.mixture[a] = weight(rng);
    for (double& w : user.mixture) w /= total;
  }
  return world;
}

DatasetSplit generate_dataset(const World& world, const WorldConfig& config) {
  config.validate();
  const Catalog& catalog = world.catalog;
  const std::size_t G = catalog.archetypes.size();
  Rng rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  DatasetSplit split;
  split.train.reserve(world.users.size() * config.train_per_user);
  split.test.reserve(world.users.size() * config.test_per_user);

  for (const LatentUser& user : world.users) {
    std::vector<std::uint32_t> complement;
    for (std::uint32_t a = 0; a < G; ++a) {
      if (user.mixture[a] == 0.0) complement.push_back(a);
    }
    if (complement.empty() && config.positive_rate < 1.0) {
      throw ConfigError("user " + std::to_string(user.id) + " covers every archetype; no negatives can be drawn");
    }
    std::discrete_distribution<std::uint32_t> by_mixture(user.mixture.begin(), user.mixture.end());

    features::BehaviorSequence seq;
    std::vector<std::uint32_t> seq_arch;
    for (std::size_t t = 0; t < config.seq_len; ++t) {
      const std::uint32_t a = by_mixture(rng);
      seq.items.push_back(catalog.items[pick(catalog.items_by_archetype[a], rng)]);
      seq_arch.push_back(a);
    }

    std::unordered_set<std::uint32_t> train_items;
    auto make = [&](bool is_test) {
      LabeledExample ex;
      ex.user = user.id;
      ex.seq = seq;
      ex.seq_archetypes = seq_arch;
      ex.ctx = uniform_id(config.contexts, rng);
      const bool positive = bernoulli(config.positive_rate, rng);
      const std::uint32_t arch = positive ? by_mixture(rng) : pick(complement, rng);
      const auto& pool = catalog.items_by_archetype[arch];
      std::uint32_t iid = pick(pool, rng);
      for (int attempt = 0; is_test && train_items.count(iid) != 0; ++attempt) {
        if (attempt == 1000) {
          throw ConfigError("catalog too small to keep train and test candidates of user " + std::to_string(user.id) +
                            " disjoint");
        }
        iid = pick(pool, rng);
      }
      if (!is_test) train_items.insert(iid);
      ex.cand = catalog.items[iid];
      ex.label = positive != bernoulli(config.noise_rate, rng) ? 1 : 0;
      return ex;
    };
    for (std::size_t i = 0; i < config.train_per_user; ++i) split.train.push_back(make(false));
    for (std::size_t i = 0; i < config.test_per_user; ++i) split.test.push_back(make(true));
  }
  return split;
}

features::EmbeddingTables gaussian_archetype_tables(const Catalog& catalog, std::size_t dim, double separation,
                                                   double spread, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t G = catalog.archetypes.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(G, std::vector<double>(dim));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& v : m) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v *= separation / norm;
  }
  features::EmbeddingTables tables;
  tables.dim = dim;
  auto fill = [&](features::Field field, std::size_t n, const std::vector<std::uint32_t>& owner) {
    diff::Matrix t(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) t(i, j) = means[owner[i]][j] + spread * normal(rng);
    }
    tables.table(field) = std::move(t);
  };
  auto owners = [&](std::size_t n, auto member_of) {
    std::vector<std::uint32_t> owner(n, 0);
    for (std::uint32_t a = 0; a < G; ++a) {
      for (std::uint32_t id : member_of(catalog.archetypes[a])) owner[id] = a;
    }
    return owner;
  };
  fill(features::Field::iid, catalog.vocab.items, catalog.item_archetype);
  fill(features::Field::cid, catalog.vocab.categories,
       owners(catalog.vocab.categories, [](const Archetype& a) { return a.categories; }));
  fill(features::Field::sid, catalog.vocab.shops, owners(catalog.vocab.shops, [](const Archetype& a) { return a.shops; }));
  fill(features::Field::bid, catalog.vocab.brands,
       owners(catalog.vocab.brands, [](const Archetype& a) { return a.brands; }));
  fill(features::Field::entities, catalog.vocab.entities,
       owners(catalog.vocab.entities, [](const Archetype& a) { return a.entities; }));
  return tables;
}

double oracle_score(const World& world, const LabeledExample& example) {
  const std::uint32_t arch = world.catalog.item_archetype.at(example.cand.iid);
  return world.users.at(example.user).mixture.at(arch);
}

}  // namespace mfn::synth
