#include "mfn/train/model_check.hpp"

#include <algorithm>

#include "mfn/model/mfn.hpp"
#include "mfn/synth/world.hpp"
#include "mfn/train/pipeline.hpp"

namespace mfn::train {
namespace {

struct Fixture {
  synth::Dataset batch;
  model::MfnConfig config;
  features::EmbeddingTables fixed;
  std::vector<centers::InterestCenters> centers;
};

Fixture make_fixture(const ModelCheckConfig& cc, std::uint64_t seed) {
  synth::WorldConfig wc;
  wc.items = 12;
  wc.categories = 4;
  wc.shops = 4;
  wc.brands = 4;
  wc.entities = 8;
  wc.contexts = 2;
  wc.archetypes = 2;
  wc.users = cc.batch;
  wc.seq_len = cc.seq_len;
  wc.train_per_user = 1;
  wc.test_per_user = 0;
  wc.noise_rate = 0.0;
  wc.seed = derive_seed(seed, "check.world");
  const auto world = synth::generate_world(wc);

  Fixture f;
  f.batch = synth::generate_dataset(world, wc).train;
  f.config.dim = cc.dim;
  f.config.hidden = cc.hidden;
  f.config.heads = cc.heads;
  f.config.channels = {{features::FieldSpec{features::Field::cid}, cc.num_interests},
                       {features::FieldSpec{features::Field::entities}, cc.num_interests}};
  f.config.aux_weight = cc.aux_weight;
  f.config.users = wc.users;
  f.config.contexts = wc.contexts;
  f.config.vocab = wc.vocabulary();
  diff::Rng rng(derive_seed(seed, "check.fixed"));
  f.fixed = features::EmbeddingTables::random(f.config.vocab, cc.dim, rng);
  for (std::size_t c = 0; c < f.config.channels.size(); ++c) {
    f.centers.push_back(
        centers::random_centers(cc.num_interests, cc.dim, 1.0, derive_seed(seed, "check.centers" + std::to_string(c))));
  }
  return f;
}

}  // namespace

ModelCheckResult check_model_gradients(const ModelCheckConfig& cc, std::uint64_t seed) {
  Fixture f = make_fixture(cc, seed);
  ModelCheckResult result;

  {
    model::MfnConfig config = f.config;
    config.finetune_centers = true;
    model::MfnModel model(config, f.fixed, f.centers, derive_seed(seed, "check.model"));
    std::vector<const synth::LabeledExample*> batch;
    for (const auto& ex : f.batch) batch.push_back(&ex);
    const diff::LossBuilder loss = [&](diff::Tape& tape) { return model.loss(tape, batch); };
    diff::GradCheckOptions options;
    options.max_coordinates = cc.max_coordinates;
    options.stencil = diff::Stencil::five_point;
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      options.seed = derive_seed(seed, "check.coords" + std::to_string(i));
      ParamCheck pc{params[i]->name, diff::finite_diff_check(loss, *params[i], cc.epsilon, options)};
      if (result.params.empty() || pc.report.max_relative_error > result.max_relative_error) {
        result.max_relative_error = pc.report.max_relative_error;
        result.worst_param = pc.name;
      }
      result.params.push_back(std::move(pc));
    }
  }

  {
    model::MfnModel model(f.config, f.fixed, f.centers, derive_seed(seed, "check.model"));
    std::vector<const synth::LabeledExample*> batch;
    for (const auto& ex : f.batch) batch.push_back(&ex);
    diff::Tape tape;
    tape.backward(model.loss(tape, batch));
    const auto params = model.parameters();
    bool untouched = true;
    for (auto& ch : model.channels()) {
      const auto& C = ch.centers.C;
      untouched = untouched && C.frozen && std::find(params.begin(), params.end(), &C) == params.end();
      for (double g : C.grad.data()) untouched = untouched && g == 0.0;
    }
    result.frozen_centers_untouched = untouched;
  }
  return result;
}

}  // namespace mfn::train
