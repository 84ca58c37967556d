#include "mfn/model/ctr_model.hpp"

#include <algorithm>

#include "mfn/diff/ops.hpp"

namespace mfn::model {

diff::Var CtrModel::loss(diff::Tape& tape, std::span<const synth::LabeledExample* const> batch) {
  return diff::binary_cross_entropy(predict(tape, batch), labels_of(batch));
}

std::vector<double> CtrModel::score(std::span<const synth::LabeledExample> examples) {
  constexpr std::size_t kChunk = 256;
  std::vector<double> out;
  out.reserve(examples.size());
  std::vector<const synth::LabeledExample*> chunk;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    chunk.clear();
    const std::size_t end = std::min(examples.size(), start + kChunk);
    for (std::size_t i = start; i < end; ++i) chunk.push_back(&examples[i]);
    diff::Tape tape;
    const diff::Matrix& p = predict(tape, chunk).value();
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(p(i, 0));
  }
  return out;
}

std::vector<double> labels_of(std::span<const synth::LabeledExample* const> batch) {
  std::vector<double> y;
  y.reserve(batch.size());
  for (const auto* ex : batch) y.push_back(static_cast<double>(ex->label));
  return y;
}

}  // namespace mfn::model
