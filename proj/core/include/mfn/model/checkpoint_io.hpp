#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mfn/features/embedding_io.hpp"

namespace mfn::model {

// Checkpoint layout:
//
//   mfn-checkpoint 1 <kind>
//   @config
//   key=value
//   ...
//   @section <name>
//   <count> <dim>
//   <token> v1 ... v_dim
//   ...
//
// Each section body is a token matrix in the embedding text format.
struct CheckpointData {
  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, features::TokenMatrix>> sections;

  const features::TokenMatrix& section(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const CheckpointData& data);
CheckpointData read_checkpoint(std::istream& in);

}  // namespace mfn::model
