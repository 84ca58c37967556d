#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "mfn/synth/example.hpp"

namespace mfn::synth {

// JSON Lines, one example per line:
//   {"user":0,"seq":[{"iid":..,"cid":..,"sid":..,"bid":..,"entities":[..],"arch":..}],
//    "cand":{"iid":..,"cid":..,"sid":..,"bid":..,"entities":[..]},"ctx":0,"label":1}
void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples);
void write_jsonl(const std::filesystem::path& path, std::span<const LabeledExample> examples);

// Throws ParseError with the offending line number; a missing file throws
// InputError naming the path.
Dataset read_jsonl(std::istream& in);
Dataset read_jsonl(const std::filesystem::path& path);

// Smallest id ranges covering every example.
DataShape infer_shape(std::span<const LabeledExample> examples);

// First example of each user, in user order (the history is per user).
std::vector<const LabeledExample*> one_per_user(std::span<const LabeledExample> examples);

}  // namespace mfn::synth
