#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfn/diff/nn.hpp"
#include "mfn/features/embedding.hpp"
#include "mfn/model/checkpoint_io.hpp"
#include "mfn/model/ctr_model.hpp"

namespace mfn::model {

struct BaseConfig {
  std::size_t dim = 16;
  std::vector<std::size_t> head_hidden{64, 32};
  std::size_t users = 1;
  std::size_t contexts = 1;
  features::Vocabulary vocab;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static BaseConfig from_map(const std::map<std::string, std::string>& values);
};

// Embedding&MLP baseline: the behavior sequence is mean-pooled (all fields
// summed per item), then [pool, user, candidate, context one-hot] feeds the
// head MLP.
class BaseModel final : public CtrModel {
 public:
  BaseModel(BaseConfig config, std::uint64_t seed);
  static BaseModel from_checkpoint(const CheckpointData& data);

  std::string kind() const override { return "base"; }
  const BaseConfig& config() const noexcept { return config_; }

  diff::Var predict(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch) override;
  std::vector<diff::Parameter*> parameters() override;
  void save(std::ostream& out) const override;

  features::TrainableTables& tables() noexcept { return tables_; }
  diff::Mlp& head() noexcept { return head_; }


 private:
  BaseConfig config_;
  features::TrainableTables tables_;
  diff::Parameter user_table_;
  diff::Mlp head_;
};

// Reads any checkpoint written by save() and rebuilds the matching model.
std::unique_ptr<CtrModel> load_model(std::istream& in);
std::unique_ptr<CtrModel> load_model(const std::filesystem::path& path);

void save_model(const CtrModel& model, const std::filesystem::path& path);

}  // namespace mfn::model
