#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mfn/diff/parameter.hpp"
#include "mfn/diff/tape.hpp"
#include "mfn/synth/example.hpp"

namespace mfn::model {

// Anything the trainer can fit and the evaluator can score.
class CtrModel {
 public:
  virtual ~CtrModel() = default;

  virtual std::string kind() const = 0;

  // n x 1 column of click probabilities, one row per example.
  virtual diff::Var predict(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch) = 0;

  // Training objective; defaults to mean binary cross entropy.
  virtual diff::Var loss(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch);

  virtual std::vector<diff::Parameter*> parameters() = 0;

  // Writes a self-describing checkpoint (see train/checkpoint.hpp).
  virtual void save(std::ostream& out) const = 0;

  // Convenience: probabilities for a list of examples, scored in chunks.
  std::vector<double> score(std::span<const synth::LabeledExample> examples);

  // Extra key=value lines echoed into the checkpoint header as run.<key>.
  std::map<std::string, std::string> provenance;
};

std::vector<double> labels_of(std::span<const synth::LabeledExample* const> batch);

}  // namespace mfn::model
