#include "config_util.hpp"

#include <cstdio>
#include <sstream>

#include "mfn/errors.hpp"

namespace mfn::model::detail {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    if (!text.empty() && text.front() == '-') throw std::invalid_argument(text);
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + text + "'");
  }
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
  }
}

const std::string& require(const std::map<std::string, std::string>& values, const std::string& key) {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

void add_section(CheckpointData& data, const diff::Parameter& p, const char* prefix) {
  data.sections.emplace_back(p.name, features::label_rows(p.value, prefix));
}

void restore_section(const CheckpointData& data, diff::Parameter& p, const char* prefix) {
  diff::Matrix v = features::unlabel_rows(data.section(p.name), prefix);
  if (!v.same_shape(p.value)) {
    throw DimensionError("checkpoint section '" + p.name + "' is " + v.shape_string() + ", expected " +
                         p.value.shape_string());
  }
  p.value = std::move(v);
}

void add_mlp(CheckpointData& data, const diff::Mlp& mlp) {
  for (const auto& layer : mlp.layers) {
    add_section(data, layer.weight);
    if (layer.has_bias) add_section(data, layer.bias);
  }
}

void restore_mlp(const CheckpointData& data, diff::Mlp& mlp) {
  for (auto& layer : mlp.layers) {
    restore_section(data, layer.weight);
    if (layer.has_bias) restore_section(data, layer.bias);
  }
}

}  // namespace mfn::model::detail
