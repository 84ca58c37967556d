#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mfn/errors.hpp"

namespace mfn::cli {
namespace {

enum class Kind { text, size, number, u64, boolean, sizes, seeds, channels, variants, init, optimizer, optional_size };

struct Key {
  const char* name;
  const char* value;
  Kind kind;
};

// clang-format off
constexpr Key kKeys[] = {
    {"seed", "1", Kind::u64},

    {"world.items", "2000", Kind::size},
    {"world.categories", "40", Kind::size},
    {"world.shops", "80", Kind::size},
    {"world.brands", "80", Kind::size},
    {"world.entities", "160", Kind::size},
    {"world.contexts", "4", Kind::size},
    {"world.archetypes", "8", Kind::size},
    {"world.users", "2000", Kind::size},
    {"world.seq_len", "20", Kind::size},
    {"world.train_per_user", "16", Kind::size},
    {"world.test_per_user", "4", Kind::size},
    {"world.max_interests", "3", Kind::size},
    {"world.combo_rate", "0.6", Kind::number},
    {"world.affinity", "0.8", Kind::number},
    {"world.positive_rate", "0.5", Kind::number},
    {"world.noise_rate", "0.1", Kind::number},

    {"model.dim", "16", Kind::size},
    {"model.hidden", "32", Kind::size},
    {"model.heads", "2", Kind::size},
    {"model.channels", "cid:4,entities:4", Kind::channels},
    {"model.head_hidden", "64,32", Kind::sizes},
    {"model.aux_weight", "0", Kind::number},
    {"model.finetune_centers", "false", Kind::boolean},

    {"embed.hidden", "32", Kind::size},
    {"embed.steps", "2000", Kind::size},
    {"embed.batch_size", "64", Kind::size},
    {"embed.lr", "0.003", Kind::number},

    {"centers.lr", "0.0001", Kind::number},
    {"centers.batch_size", "32", Kind::size},
    {"centers.max_iters", "1000", Kind::size},
    {"centers.eval_batch_size", "256", Kind::size},
    {"centers.init", "spread", Kind::init},
    {"centers.optimizer", "adam", Kind::optimizer},

    {"train.lr", "0.003", Kind::number},
    {"train.beta1", "0.9", Kind::number},
    {"train.beta2", "0.999", Kind::number},
    {"train.eps", "1e-8", Kind::number},
    {"train.batch_size", "256", Kind::size},
    {"train.epochs", "1", Kind::size},
    {"train.max_steps", "none", Kind::optional_size},

    {"compare.variants", "base,mfn,mfn_no_pretrain,mfn_no_combination", Kind::variants},
    // Empty: three consecutive seeds starting at `seed`.
    {"compare.seeds", "", Kind::seeds},

    // Inputs. Outputs are flags only and are not echoed.
    {"path.train", "", Kind::text},
    {"path.test", "", Kind::text},
    {"path.embeddings", "", Kind::text},
    {"path.centers_dir", "", Kind::text},
    {"path.model", "", Kind::text},
};
// clang-format on

const Key* find_key(const std::string& name) {
  for (const Key& k : kKeys) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(sep, start), s.size());
    out.push_back(trim(s.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

template <typename T>
bool parse_int(const std::string& s, T& out) {
  if (s.empty() || s[0] == '-' || s[0] == '+') return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") return out = true, true;
  if (s == "false" || s == "0") return out = false, true;
  return false;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw UsageError("config key '" + key + "': '" + value + "' is not " + expected);
}

void check(const Key& key, const std::string& v) {
  std::size_t n = 0;
  std::uint64_t u = 0;
  double x = 0.0;
  bool b = false;
  switch (key.kind) {
    case Kind::text:
      return;
    case Kind::size:
      if (!parse_int(v, n)) bad_value(key.name, v, "a non-negative integer");
      return;
    case Kind::optional_size:
      if (v != "none" && !parse_int(v, n)) bad_value(key.name, v, "a non-negative integer or 'none'");
      return;
    case Kind::u64:
      if (!parse_int(v, u)) bad_value(key.name, v, "a non-negative integer");
      return;
    case Kind::number:
      if (!parse_number(v, x)) bad_value(key.name, v, "a number");
      return;
    case Kind::boolean:
      if (!parse_bool(v, b)) bad_value(key.name, v, "true or false");
      return;
    case Kind::sizes:
      if (v.empty()) return;
      for (const auto& part : split(v, ',')) {
        if (!parse_int(part, n)) bad_value(key.name, v, "a comma-separated list of integers");
      }
      return;
    case Kind::seeds:
      if (v.empty()) return;
      for (const auto& part : split(v, ',')) {
        if (!parse_int(part, u)) bad_value(key.name, v, "a comma-separated list of seeds");
      }
      return;
    case Kind::channels:
      try {
        parse_channels(v);
      } catch (const Error& e) {
        bad_value(key.name, v, std::string("a channel list like cid:4,entities:4 (") + e.what() + ")");
      }
      return;
    case Kind::variants:
      try {
        train::parse_variants(v);
      } catch (const Error& e) {
        bad_value(key.name, v, std::string("a variant list (") + e.what() + ")");
      }
      return;
    case Kind::init:
      if (v != "sampled" && v != "spread" && v != "random_normal") bad_value(key.name, v, "sampled, spread or random_normal");
      return;
    case Kind::optimizer:
      if (v != "adam" && v != "sgd") bad_value(key.name, v, "adam or sgd");
      return;
  }
}

}  // namespace

std::vector<model::ChannelConfig> parse_channels(const std::string& text) {
  std::vector<model::ChannelConfig> out;
  for (const auto& part : split(text, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("channel '" + part + "' needs the form fields:K");
    model::ChannelConfig c;
    c.fields = features::FieldSpec::parse(trim(part.substr(0, colon)));
    if (!parse_int(trim(part.substr(colon + 1)), c.num_interests) || c.num_interests == 0) {
      throw ConfigError("channel '" + part + "' needs a positive K");
    }
    out.push_back(c);
  }
  return out;
}

RunConfig::RunConfig() {
  for (const Key& k : kKeys) values_[k.name] = k.value;
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path.string() + "'");
  merge_text(in, path.string());
}

void RunConfig::merge_text(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ": line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Key* k = find_key(key);
  if (k == nullptr) throw UsageError("unknown config key '" + key + "'");
  check(*k, value);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

std::size_t RunConfig::size(const std::string& key) const {
  std::size_t n = 0;
  parse_int(get(key), n);
  return n;
}

double RunConfig::number(const std::string& key) const {
  double x = 0.0;
  parse_number(get(key), x);
  return x;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  std::uint64_t u = 0;
  parse_int(get(key), u);
  return u;
}

bool RunConfig::flag(const std::string& key) const {
  bool b = false;
  parse_bool(get(key), b);
  return b;
}

std::vector<std::uint64_t> RunConfig::seeds(const std::string& key) const {
  const std::string& v = get(key);
  if (v.empty()) return {seed(), seed() + 1, seed() + 2};
  std::vector<std::uint64_t> out;
  for (const auto& part : split(v, ',')) {
    std::uint64_t u = 0;
    parse_int(part, u);
    out.push_back(u);
  }
  return out;
}

synth::WorldConfig RunConfig::world() const {
  synth::WorldConfig w;
  w.items = size("world.items");
  w.categories = size("world.categories");
  w.shops = size("world.shops");
  w.brands = size("world.brands");
  w.entities = size("world.entities");
  w.contexts = size("world.contexts");
  w.archetypes = size("world.archetypes");
  w.users = size("world.users");
  w.seq_len = size("world.seq_len");
  w.train_per_user = size("world.train_per_user");
  w.test_per_user = size("world.test_per_user");
  w.max_interests = size("world.max_interests");
  w.combo_rate = number("world.combo_rate");
  w.affinity = number("world.affinity");
  w.positive_rate = number("world.positive_rate");
  w.noise_rate = number("world.noise_rate");
  w.seed = train::derive_seed(seed(), "world");
  return w;
}

train::PipelineConfig RunConfig::pipeline() const {
  train::PipelineConfig p;
  p.model.dim = size("model.dim");
  p.model.hidden = size("model.hidden");
  p.model.heads = size("model.heads");
  p.model.channels = parse_channels(get("model.channels"));
  p.model.head_hidden.clear();
  if (!get("model.head_hidden").empty()) {
    for (const auto& part : split(get("model.head_hidden"), ',')) {
      std::size_t n = 0;
      parse_int(part, n);
      p.model.head_hidden.push_back(n);
    }
  }
  p.model.aux_weight = number("model.aux_weight");
  p.model.finetune_centers = flag("model.finetune_centers");

  p.embed.dim = p.model.dim;
  p.embed.hidden = size("embed.hidden");
  p.embed.steps = size("embed.steps");
  p.embed.batch_size = size("embed.batch_size");
  p.embed.lr = number("embed.lr");

  p.centers.lr = number("centers.lr");
  p.centers.batch_size = size("centers.batch_size");
  p.centers.max_iters = size("centers.max_iters");
  p.centers.eval_batch_size = size("centers.eval_batch_size");
  const std::string& init = get("centers.init");
  p.centers.init = init == "sampled"  ? centers::CenterInit::sampled
                   : init == "spread" ? centers::CenterInit::spread
                                      : centers::CenterInit::random_normal;
  p.centers.optimizer = get("centers.optimizer") == "sgd" ? centers::CenterOptimizer::sgd : centers::CenterOptimizer::adam;

  p.train.adam.lr = number("train.lr");
  p.train.adam.beta1 = number("train.beta1");
  p.train.adam.beta2 = number("train.beta2");
  p.train.adam.eps = number("train.eps");
  p.train.batch_size = size("train.batch_size");
  p.train.epochs = size("train.epochs");
  if (get("train.max_steps") != "none") p.train.max_steps = size("train.max_steps");
  return p;
}

void RunConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
}

void write_sidecar(const RunConfig& config, const std::filesystem::path& artifact) {
  std::filesystem::path path = artifact;
  path += ".config";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  config.write(out);
}

}  // namespace mfn::cli
