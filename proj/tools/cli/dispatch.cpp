#include "dispatch.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "mfn/centers/centers.hpp"
#include "mfn/errors.hpp"
#include "mfn/features/embedding_io.hpp"
#include "mfn/model/base.hpp"
#include "mfn/synth/dataset_io.hpp"
#include "mfn/train/model_check.hpp"
#include "mfn/train/pipeline.hpp"
#include "mfn/train/trainer.hpp"
#include "run_config.hpp"

namespace mfn::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  // Flag values that map onto config keys, applied last.
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App& sub, Common& c) {
  sub.add_option("--config", c.config_file, "key=value config file");
  sub.add_option("--set", c.sets, "override one config key (key=value), repeatable");
  sub.add_option("--seed", c.seed, "run seed (falls back to MFN_SEED, then the config)");
}

// Adds a flag whose value is stored under `key` in the run config.
void add_keyed(CLI::App& sub, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  sub.add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.overrides.emplace_back(key, v); }, help);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (const char* env = std::getenv("MFN_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env);
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& s : c.sets) cfg.set(s);
  for (const auto& [k, v] : c.overrides) cfg.set(k, v);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

const std::string& require_path(const RunConfig& cfg, const std::string& key, const std::string& flag) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw UsageError("missing " + flag + " (or " + key + " in the config)");
  return v;
}

synth::Dataset load_optional(const RunConfig& cfg, const std::string& key) {
  const std::string& path = cfg.get(key);
  return path.empty() ? synth::Dataset{} : synth::read_jsonl(path);
}

// The configured world shape, widened to cover every id in the data.
synth::DataShape cover_shape(const RunConfig& cfg, std::initializer_list<const synth::Dataset*> sets) {
  synth::DataShape shape = cfg.world().shape();
  for (const auto* set : sets) {
    const synth::DataShape seen = synth::infer_shape(*set);
    shape.users = std::max(shape.users, seen.users);
    shape.contexts = std::max(shape.contexts, seen.contexts);
    shape.vocab.items = std::max(shape.vocab.items, seen.vocab.items);
    shape.vocab.categories = std::max(shape.vocab.categories, seen.vocab.categories);
    shape.vocab.shops = std::max(shape.vocab.shops, seen.vocab.shops);
    shape.vocab.brands = std::max(shape.vocab.brands, seen.vocab.brands);
    shape.vocab.entities = std::max(shape.vocab.entities, seen.vocab.entities);
  }
  return shape;
}

fs::path centers_file(const fs::path& dir, std::size_t channel) {
  return dir / ("centers-" + std::to_string(channel) + ".txt");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

int gen_data(const RunConfig& cfg, const std::string& out_dir, std::ostream& out) {
  const synth::WorldConfig wc = cfg.world();
  const auto world = synth::generate_world(wc);
  const auto split = synth::generate_dataset(world, wc);
  fs::create_directories(out_dir);
  const fs::path train = fs::path(out_dir) / "train.jsonl";
  const fs::path test = fs::path(out_dir) / "test.jsonl";
  synth::write_jsonl(train, split.train);
  synth::write_jsonl(test, split.test);
  write_sidecar(cfg, train);
  write_sidecar(cfg, test);
  out << "wrote " << split.train.size() << " train examples to " << train.string() << "\n"
      << "wrote " << split.test.size() << " test examples to " << test.string() << "\n";
  return kExitOk;
}

int pretrain_embed(const RunConfig& cfg, const std::string& out_path, std::ostream& out) {
  const auto train = synth::read_jsonl(require_path(cfg, "path.train", "--train"));
  const auto test = load_optional(cfg, "path.test");
  const auto shape = cover_shape(cfg, {&train, &test});
  features::VanillaPretrainConfig ec = cfg.pipeline().embed;
  ec.seed = train::derive_seed(cfg.seed(), "embed");
  const auto result = features::pretrain_fixed_embeddings(train, shape.vocab, ec);
  ensure_parent(out_path);
  features::save_embeddings(result.tables, out_path);
  write_sidecar(cfg, out_path);
  out << "vanilla train auc " << fmt("%.4f", result.train_auc) << ", final loss "
      << fmt("%.5f", result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n"
      << "wrote " << out_path << "\n";
  return kExitOk;
}

int pretrain_centers(const RunConfig& cfg, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto train = synth::read_jsonl(require_path(cfg, "path.train", "--train"));
  const auto fixed = features::load_embeddings(require_path(cfg, "path.embeddings", "--embeddings"));
  const train::PipelineConfig pc = cfg.pipeline();
  fs::create_directories(out_dir);
  for (std::size_t c = 0; c < pc.model.channels.size(); ++c) {
    const auto& channel = pc.model.channels[c];
    const auto corpus = train::center_corpus(train, fixed, channel.fields);
    centers::CenterPretrainConfig cc = pc.centers;
    cc.K = channel.num_interests;
    cc.seed = train::derive_seed(cfg.seed(), "centers" + std::to_string(c));
    const auto result = centers::pretrain_centers(corpus, cc);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    const fs::path path = centers_file(out_dir, c);
    centers::save_centers(result.centers, path);
    write_sidecar(cfg, path);
    out << "channel " << c << " [" << channel.fields.to_string() << "] K=" << cc.K << ": eval l_e "
        << fmt("%.6f", result.initial_eval_loss) << " -> " << fmt("%.6f", result.final_eval_loss) << ", wrote "
        << path.string() << "\n";
  }
  return kExitOk;
}

int train_model(const RunConfig& cfg, const std::string& variant_name, bool inline_pretrain,
                const std::string& out_path, const std::string& curve_path, std::ostream& out, std::ostream& err) {
  const train::Variant variant = train::parse_variant(variant_name);
  const auto train = synth::read_jsonl(require_path(cfg, "path.train", "--train"));
  const auto test = load_optional(cfg, "path.test");
  const auto shape = cover_shape(cfg, {&train, &test});
  const train::PipelineConfig pc = cfg.pipeline();

  std::optional<train::Pretrained> pre;
  if (variant != train::Variant::base) {
    if (inline_pretrain) {
      pre = train::pretrain(train, shape, pc, cfg.seed(), &err);
    } else {
      const std::string& emb = cfg.get("path.embeddings");
      if (emb.empty()) {
        throw ConfigError("variant " + variant_name + " needs fixed embeddings (--embeddings) or --pretrain");
      }
      pre.emplace();
      pre->fixed = features::load_embeddings(emb);
      if (variant != train::Variant::mfn_no_pretrain) {
        const std::string& dir = cfg.get("path.centers_dir");
        if (dir.empty()) {
          throw ConfigError("variant " + variant_name + " needs pretrained centers (--centers-dir) or --pretrain");
        }
        for (std::size_t c = 0; c < pc.model.channels.size(); ++c) {
          pre->centers.push_back(centers::load_centers(centers_file(dir, c)));
        }
      }
      pre->random = train::random_channel_centers(train, pre->fixed, pc, cfg.seed());
    }
  }

  auto model = train::build_model(variant, shape, pre ? &*pre : nullptr, pc, cfg.seed());
  for (const auto& [k, v] : cfg.values()) model->provenance["config." + k] = v;
  train::TrainConfig tc = pc.train;
  tc.seed = train::derive_seed(cfg.seed(), "train");
  const auto fit = train::train(*model, train, tc);

  ensure_parent(out_path);
  model::save_model(*model, out_path);
  write_sidecar(cfg, out_path);
  if (!curve_path.empty()) {
    ensure_parent(curve_path);
    std::ofstream curve(curve_path, std::ios::binary | std::ios::trunc);
    if (!curve) throw InputError("cannot open '" + curve_path + "' for writing");
    train::write_loss_curve(curve, fit.loss_curve);
    write_sidecar(cfg, curve_path);
  }
  out << variant_name << ": " << fit.steps << " steps, final loss "
      << fmt("%.5f", fit.loss_curve.empty() ? 0.0 : fit.loss_curve.back()) << "\n";
  if (!test.empty()) {
    const auto m = train::evaluate(*model, test);
    out << "test auc " << fmt("%.6f", m.auc) << ", logloss " << fmt("%.6f", m.logloss) << "\n";
  }
  out << "wrote " << out_path << "\n";
  return kExitOk;
}

int eval_model(const RunConfig& cfg, const std::string& out_path, std::ostream& out) {
  auto model = model::load_model(fs::path(require_path(cfg, "path.model", "--model")));
  const auto test = synth::read_jsonl(require_path(cfg, "path.test", "--test"));
  const auto m = train::evaluate(*model, test);
  out << "auc " << fmt("%.10f", m.auc) << "\nlogloss " << fmt("%.10f", m.logloss) << "\nn " << m.n_examples << "\n";
  if (!out_path.empty()) {
    ensure_parent(out_path);
    std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw InputError("cannot open '" + out_path + "' for writing");
    csv << "auc,logloss,n\n" << fmt("%.10f", m.auc) << ',' << fmt("%.10f", m.logloss) << ',' << m.n_examples << '\n';
    write_sidecar(cfg, out_path);
  }
  return kExitOk;
}

int compare(const RunConfig& cfg, const std::string& out_path, std::ostream& out, std::ostream& err) {
  const std::string& train_path = cfg.get("path.train");
  const std::string& test_path = cfg.get("path.test");
  if (train_path.empty() != test_path.empty()) throw UsageError("give both --train and --test, or neither");
  synth::Dataset train;
  synth::Dataset test;
  if (train_path.empty()) {
    const synth::WorldConfig wc = cfg.world();
    err << "generating synthetic data (" << wc.users << " users)\n";
    auto split = synth::generate_dataset(synth::generate_world(wc), wc);
    train = std::move(split.train);
    test = std::move(split.test);
  } else {
    train = synth::read_jsonl(train_path);
    test = synth::read_jsonl(test_path);
  }
  const auto shape = cover_shape(cfg, {&train, &test});
  const auto variants = train::parse_variants(cfg.get("compare.variants"));
  const auto seeds = cfg.seeds("compare.seeds");
  const auto table = train::compare(variants, train, test, shape, seeds, cfg.pipeline(), &err);
  train::write_compare_text(out, table);
  if (!out_path.empty()) {
    ensure_parent(out_path);
    std::ofstream csv(out_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw InputError("cannot open '" + out_path + "' for writing");
    train::write_compare_csv(csv, table);
    write_sidecar(cfg, out_path);
  }
  return kExitOk;
}

int grad_check(const RunConfig& cfg, std::optional<double> epsilon, std::ostream& out) {
  train::ModelCheckConfig mc;
  if (epsilon) mc.epsilon = *epsilon;
  const auto r = train::check_model_gradients(mc, cfg.seed());
  for (const auto& p : r.params) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-28s %4zu coords  max rel err %.3e\n", p.name.c_str(),
                  p.report.coordinates_checked, p.report.max_relative_error);
    out << buf;
  }
  out << "max relative error " << fmt("%.3e", r.max_relative_error) << " (" << r.worst_param << ")\n"
      << "frozen centers receive no gradient: " << (r.frozen_centers_untouched ? "yes" : "no") << "\n";
  const bool ok = r.max_relative_error < 1e-4 && r.frozen_centers_untouched;
  out << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kExitOk : kExitData;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-interest, fine-grained user modeling (MFN) toolkit", "mfn"};
  app.require_subcommand(1);

  Common common;
  std::string out_dir;
  std::string out_path;
  std::string curve_path;
  std::string variant = "mfn";
  bool inline_pretrain = false;
  std::optional<double> epsilon;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic train/test split");
  add_common(*gen, common);
  gen->add_option("--out-dir", out_dir, "directory for train.jsonl and test.jsonl")->required();

  auto* embed = app.add_subcommand("pretrain-embed", "fit the fixed embedding table with a vanilla CTR model");
  add_common(*embed, common);
  add_keyed(*embed, common, "--train", "path.train", "training JSONL");
  add_keyed(*embed, common, "--test", "path.test", "test JSONL (only widens the vocabulary)");
  embed->add_option("--out", out_path, "embedding file to write")->required();

  auto* cent = app.add_subcommand("pretrain-centers", "learn interest centers for every channel");
  add_common(*cent, common);
  add_keyed(*cent, common, "--train", "path.train", "training JSONL");
  add_keyed(*cent, common, "--embeddings", "path.embeddings", "fixed embedding file");
  cent->add_option("--out-dir", out_dir, "directory for centers-<channel>.txt")->required();

  auto* trn = app.add_subcommand("train", "train one model variant and write a checkpoint");
  add_common(*trn, common);
  add_keyed(*trn, common, "--train", "path.train", "training JSONL");
  add_keyed(*trn, common, "--test", "path.test", "optional test JSONL, scored after training");
  add_keyed(*trn, common, "--embeddings", "path.embeddings", "fixed embedding file");
  add_keyed(*trn, common, "--centers-dir", "path.centers_dir", "directory holding centers-<channel>.txt");
  trn->add_option("--variant", variant, "model variant")
      ->check(CLI::IsMember({"base", "mfn", "mfn_no_pretrain", "mfn_no_combination"}))
      ->capture_default_str();
  trn->add_flag("--pretrain", inline_pretrain, "run embedding and center pretraining in-process");
  trn->add_option("--out", out_path, "checkpoint to write")->required();
  trn->add_option("--loss-curve", curve_path, "CSV of per-step training loss");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a test set");
  add_common(*ev, common);
  add_keyed(*ev, common, "--model", "path.model", "checkpoint file");
  add_keyed(*ev, common, "--test", "path.test", "test JSONL");
  ev->add_option("--out", out_path, "metrics CSV to write");

  auto* cmp = app.add_subcommand("compare", "train Base and MFN variants per seed and report RelaImpr");
  add_common(*cmp, common);
  add_keyed(*cmp, common, "--train", "path.train", "training JSONL (default: generate from the config)");
  add_keyed(*cmp, common, "--test", "path.test", "test JSONL");
  add_keyed(*cmp, common, "--variants", "compare.variants", "comma-separated variant list");
  add_keyed(*cmp, common, "--seeds", "compare.seeds", "comma-separated training seeds");
  cmp->add_option("--out", out_path, "metrics CSV to write");

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every MFN gradient on a tiny config");
  add_common(*gc, common);
  gc->add_option("--epsilon", epsilon, "finite-difference step");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    const RunConfig cfg = resolve(common);
    if (gen->parsed()) return gen_data(cfg, out_dir, out);
    if (embed->parsed()) return pretrain_embed(cfg, out_path, out);
    if (cent->parsed()) return pretrain_centers(cfg, out_dir, out, err);
    if (trn->parsed()) return train_model(cfg, variant, inline_pretrain, out_path, curve_path, out, err);
    if (ev->parsed()) return eval_model(cfg, out_path, out);
    if (cmp->parsed()) return compare(cfg, out_path, out, err);
    if (gc->parsed()) return grad_check(cfg, epsilon, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace mfn::cli
