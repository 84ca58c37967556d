#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfn/synth/world.hpp"
#include "mfn/train/pipeline.hpp"

namespace mfn::cli {

// Bad command line or config keys; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key=value settings. Every key has a default; unknown keys are rejected.
// Precedence, lowest first: defaults, MFN_SEED, config file, --set, flags.
class RunConfig {
 public:
  RunConfig();

  // Lines are "key = value"; blank lines and lines starting with '#' are skipped.
  void merge_file(const std::filesystem::path& path);
  void merge_text(std::istream& in, const std::string& source);
  // "key=value"
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::size_t size(const std::string& key) const;
  double number(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::uint64_t> seeds(const std::string& key) const;

  std::uint64_t seed() const { return u64("seed"); }
  synth::WorldConfig world() const;
  train::PipelineConfig pipeline() const;

  // Resolved settings, one "key=value" line each in key order.
  void write(std::ostream& out) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Writes `<artifact>.config` next to an output file.
void write_sidecar(const RunConfig& config, const std::filesystem::path& artifact);

// "cid:4,entities:4" -> channel list.
std::vector<model::ChannelConfig> parse_channels(const std::string& text);

}  // namespace mfn::cli
