#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfn/diff/nn.hpp"
#include "mfn/model/checkpoint_io.hpp"

namespace mfn::model::detail {

std::string format_double(double v);
std::string join_sizes(const std::vector<std::size_t>& values);
std::vector<std::string> split(const std::string& text, char sep);
std::size_t to_size(const std::string& key, const std::string& text);
double to_double(const std::string& key, const std::string& text);
const std::string& require(const std::map<std::string, std::string>& values, const std::string& key);

// Parameter <-> "row:i" labelled checkpoint sections.
void add_section(CheckpointData& data, const diff::Parameter& p, const char* prefix = "row");
void restore_section(const CheckpointData& data, diff::Parameter& p, const char* prefix = "row");
void add_mlp(CheckpointData& data, const diff::Mlp& mlp);
void restore_mlp(const CheckpointData& data, diff::Mlp& mlp);

}  // namespace mfn::model::detail
