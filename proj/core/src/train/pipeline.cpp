#include "mfn/train/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>

#include "mfn/errors.hpp"
#include "mfn/model/base.hpp"
#include "mfn/synth/dataset_io.hpp"

namespace mfn::train {
namespace {

constexpr std::pair<Variant, std::string_view> kVariantNames[] = {
    {Variant::base, "base"},
    {Variant::mfn, "mfn"},
    {Variant::mfn_no_pretrain, "mfn_no_pretrain"},
    {Variant::mfn_no_combination, "mfn_no_combination"},
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, text] : kVariantNames) {
    if (text == name) return variant;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected base, mfn, mfn_no_pretrain or mfn_no_combination)");
}

std::vector<Variant> parse_variants(std::string_view comma_list) {
  std::vector<Variant> out;
  std::size_t start = 0;
  while (start <= comma_list.size()) {
    const std::size_t comma = std::min(comma_list.find(',', start), comma_list.size());
    const auto part = comma_list.substr(start, comma - start);
    if (!part.empty()) out.push_back(parse_variant(part));
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

std::vector<diff::Matrix> center_corpus(std::span<const synth::LabeledExample> examples,
                                        const features::EmbeddingTables& fixed, const features::FieldSpec& fields) {
  const features::EmbeddingBundle bundle(fixed, fixed);
  std::vector<diff::Matrix> out;
  for (const auto* ex : synth::one_per_user(examples)) {
    out.push_back(features::embed_sequence(bundle, ex->seq, fields, features::Which::fixed));
  }
  return out;
}

std::vector<centers::InterestCenters> random_channel_centers(std::span<const synth::LabeledExample> train,
                                                             const features::EmbeddingTables& fixed,
                                                             const PipelineConfig& config, std::uint64_t seed) {
  std::vector<centers::InterestCenters> out;
  for (std::size_t c = 0; c < config.model.channels.size(); ++c) {
    const auto& channel = config.model.channels[c];
    const auto corpus = center_corpus(train, fixed, channel.fields);
    out.push_back(centers::random_centers(channel.num_interests, config.model.dim, centers::corpus_rms(corpus),
                                          derive_seed(seed, "random_centers" + std::to_string(c))));
  }
  return out;
}

Pretrained pretrain(std::span<const synth::LabeledExample> train, const synth::DataShape& shape,
                    const PipelineConfig& config, std::uint64_t seed, std::ostream* log) {
  Pretrained out;
  features::VanillaPretrainConfig embed = config.embed;
  embed.dim = config.model.dim;
  embed.seed = derive_seed(seed, "embed");
  auto vanilla = features::pretrain_fixed_embeddings(train, shape.vocab, embed);
  out.fixed = std::move(vanilla.tables);
  if (log) *log << "  fixed embeddings: vanilla train auc " << fmt("%.4f", vanilla.train_auc) << "\n";

  for (std::size_t c = 0; c < config.model.channels.size(); ++c) {
    const auto& channel = config.model.channels[c];
    const auto corpus = center_corpus(train, out.fixed, channel.fields);
    centers::CenterPretrainConfig cc = config.centers;
    cc.K = channel.num_interests;
    cc.seed = derive_seed(seed, "centers" + std::to_string(c));
    auto result = centers::pretrain_centers(corpus, cc);
    if (log) {
      *log << "  centers[" << channel.fields.to_string() << "]: eval l_e " << fmt("%.5f", result.initial_eval_loss)
           << " -> " << fmt("%.5f", result.final_eval_loss) << "\n";
    }
    out.centers.push_back(std::move(result.centers));
  }
  out.random = random_channel_centers(train, out.fixed, config, seed);
  return out;
}

model::MfnConfig model_config(const PipelineConfig& config, const synth::DataShape& shape) {
  model::MfnConfig m = config.model;
  m.users = shape.users;
  m.contexts = shape.contexts;
  m.vocab = shape.vocab;
  m.validate();
  return m;
}

std::unique_ptr<model::CtrModel> build_model(Variant variant, const synth::DataShape& shape,
                                             const Pretrained* pretrained, const PipelineConfig& config,
                                             std::uint64_t seed) {
  const std::uint64_t model_seed = derive_seed(seed, "model");
  if (variant == Variant::base) {
    model::BaseConfig bc;
    bc.dim = config.model.dim;
    bc.head_hidden = config.model.head_hidden;
    bc.users = shape.users;
    bc.contexts = shape.contexts;
    bc.vocab = shape.vocab;
    auto m = std::make_unique<model::BaseModel>(bc, model_seed);
    m->provenance["variant"] = std::string(variant_name(variant));
    return m;
  }
  if (pretrained == nullptr) throw ConfigError("variant " + std::string(variant_name(variant)) + " needs centers");
  model::MfnConfig mc = model_config(config, shape);
  if (variant == Variant::mfn_no_combination) mc.use_combination = false;
  const auto& centers = variant == Variant::mfn_no_pretrain ? pretrained->random : pretrained->centers;
  auto m = std::make_unique<model::MfnModel>(mc, pretrained->fixed, centers, model_seed);
  m->provenance["variant"] = std::string(variant_name(variant));
  return m;
}

CompareTable compare(std::span<const Variant> variants, std::span<const synth::LabeledExample> train,
                     std::span<const synth::LabeledExample> test, const synth::DataShape& shape,
                     std::span<const std::uint64_t> seeds, const PipelineConfig& config, std::ostream* log) {
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  if (variants.empty()) throw ConfigError("compare needs at least one variant");

  std::vector<Variant> ordered;
  bool any_mfn = false;
  for (Variant v : variants) {
    if (std::find(ordered.begin(), ordered.end(), v) == ordered.end()) ordered.push_back(v);
    any_mfn = any_mfn || v != Variant::base;
  }

  CompareTable table;
  std::map<Variant, std::vector<CompareRow>> per_variant;
  for (std::uint64_t seed : seeds) {
    if (log) *log << "seed " << seed << "\n";
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, "train");

    auto run = [&](Variant v, const Pretrained* pre) {
      auto model = build_model(v, shape, pre, config, seed);
      const auto fit = train::train(*model, train, tc);
      const Metrics m = evaluate(*model, test);
      if (log) {
        *log << "  " << variant_name(v) << ": " << fit.steps << " steps, final loss "
             << fmt("%.5f", fit.loss_curve.empty() ? 0.0 : fit.loss_curve.back()) << ", test auc "
             << fmt("%.5f", m.auc) << "\n";
      }
      return m;
    };

    const Metrics base = run(Variant::base, nullptr);
    std::optional<Pretrained> pre;
    if (any_mfn) pre = pretrain(train, shape, config, seed, log);
    for (Variant v : ordered) {
      const Metrics m = v == Variant::base ? base : run(v, &*pre);
      CompareRow row{std::string(variant_name(v)), std::to_string(seed), m.auc, m.logloss,
                     rela_impr(m.auc, base.auc)};
      per_variant[v].push_back(row);
      table.rows.push_back(std::move(row));
    }
  }
  if (seeds.size() > 1) {
    for (Variant v : ordered) {
      const auto& rows = per_variant[v];
      CompareRow mean{std::string(variant_name(v)), "mean", 0.0, 0.0, 0.0};
      for (const auto& r : rows) {
        mean.auc += r.auc;
        mean.logloss += r.logloss;
        mean.rela_impr_pct += r.rela_impr_pct;
      }
      const double n = static_cast<double>(rows.size());
      mean.auc /= n;
      mean.logloss /= n;
      mean.rela_impr_pct /= n;
      table.rows.push_back(std::move(mean));
    }
  }
  return table;
}

void write_compare_csv(std::ostream& out, const CompareTable& table) {
  out << "variant,seed,auc,logloss,rela_impr_pct\n";
  for (const auto& r : table.rows) {
    out << r.variant << ',' << r.seed << ',' << fmt("%.10f", r.auc) << ',' << fmt("%.10f", r.logloss) << ','
        << fmt("%.6f", r.rela_impr_pct) << '\n';
  }
}

void write_compare_text(std::ostream& out, const CompareTable& table) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %-8s %8s %9s %10s\n", "variant", "seed", "auc", "logloss", "RelaImpr");
  out << buf;
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof(buf), "%-20s %-8s %8.4f %9.4f %9.2f%%\n", r.variant.c_str(), r.seed.c_str(), r.auc,
                  r.logloss, r.rela_impr_pct);
    out << buf;
  }
}

}  // namespace mfn::train
