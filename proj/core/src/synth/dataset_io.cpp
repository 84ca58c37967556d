#include "mfn/synth/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <json.hpp>
#include <string>

#include "mfn/errors.hpp"

namespace mfn::synth {
namespace {

using nlohmann::json;

void append_ids(std::string& out, const std::vector<std::uint32_t>& ids) {
  out += '[';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i != 0) out += ',';
    out += std::to_string(ids[i]);
  }
  out += ']';
}

void append_item(std::string& out, const features::ItemRecord& item, const std::uint32_t* arch) {
  out += "{\"iid\":" + std::to_string(item.iid) + ",\"cid\":" + std::to_string(item.cid) +
         ",\"sid\":" + std::to_string(item.sid) + ",\"bid\":" + std::to_string(item.bid) + ",\"entities\":";
  append_ids(out, item.entities);
  if (arch != nullptr) out += ",\"arch\":" + std::to_string(*arch);
  out += '}';
}

std::uint32_t id_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  if (!it->is_number_unsigned()) throw std::invalid_argument(std::string("field '") + key + "' must be a non-negative integer");
  const auto v = it->get<std::uint64_t>();
  if (v > UINT32_MAX) throw std::invalid_argument(std::string("field '") + key + "' is out of range");
  return static_cast<std::uint32_t>(v);
}

features::ItemRecord parse_item(const json& obj, std::uint32_t* arch, bool& has_arch) {
  if (!obj.is_object()) throw std::invalid_argument("item must be an object");
  features::ItemRecord item;
  item.iid = id_field(obj, "iid");
  item.cid = id_field(obj, "cid");
  item.sid = id_field(obj, "sid");
  item.bid = id_field(obj, "bid");
  const auto ents = obj.find("entities");
  if (ents == obj.end() || !ents->is_array()) throw std::invalid_argument("item needs an 'entities' array");
  for (const auto& e : *ents) {
    if (!e.is_number_unsigned()) throw std::invalid_argument("entity ids must be non-negative integers");
    item.entities.push_back(e.get<std::uint32_t>());
  }
  has_arch = arch != nullptr && obj.contains("arch");
  if (has_arch) *arch = id_field(obj, "arch");
  return item;
}

LabeledExample parse_example(const std::string& line) {
  const json doc = json::parse(line);
  if (!doc.is_object()) throw std::invalid_argument("record must be a JSON object");
  LabeledExample ex;
  ex.user = id_field(doc, "user");
  ex.ctx = id_field(doc, "ctx");
  const std::uint32_t label = id_field(doc, "label");
  if (label > 1) throw std::invalid_argument("label must be 0 or 1");
  ex.label = static_cast<int>(label);
  const auto seq = doc.find("seq");
  if (seq == doc.end() || !seq->is_array()) throw std::invalid_argument("missing 'seq' array");
  bool all_arch = true;
  for (const auto& it : *seq) {
    std::uint32_t arch = 0;
    bool has_arch = false;
    ex.seq.items.push_back(parse_item(it, &arch, has_arch));
    all_arch = all_arch && has_arch;
    ex.seq_archetypes.push_back(arch);
  }
  if (!all_arch) ex.seq_archetypes.clear();
  const auto cand = doc.find("cand");
  if (cand == doc.end()) throw std::invalid_argument("missing 'cand'");
  bool unused = false;
  ex.cand = parse_item(*cand, nullptr, unused);
  return ex;
}

Dataset read_lines(std::istream& in, const std::string& source) {
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_example(line));
    } catch (const json::exception& e) {
      throw ParseError(source + "invalid JSON: " + e.what(), line_no);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace

void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples) {
  std::string line;
  for (const LabeledExample& ex : examples) {
    const bool with_arch = ex.seq_archetypes.size() == ex.seq.size();
    line = "{\"user\":" + std::to_string(ex.user) + ",\"seq\":[";
    for (std::size_t t = 0; t < ex.seq.size(); ++t) {
      if (t != 0) line += ',';
      append_item(line, ex.seq.items[t], with_arch ? &ex.seq_archetypes[t] : nullptr);
    }
    line += "],\"cand\":";
    append_item(line, ex.cand, nullptr);
    line += ",\"ctx\":" + std::to_string(ex.ctx) + ",\"label\":" + std::to_string(ex.label) + "}\n";
    out << line;
  }
}

void write_jsonl(const std::filesystem::path& path, std::span<const LabeledExample> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  write_jsonl(out, examples);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Dataset read_jsonl(std::istream& in) { return read_lines(in, ""); }

Dataset read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return read_lines(in, path.string() + ": ");
}

DataShape infer_shape(std::span<const LabeledExample> examples) {
  DataShape shape;
  auto cover = [&](const features::ItemRecord& item) {
    shape.vocab.items = std::max<std::size_t>(shape.vocab.items, item.iid + 1);
    shape.vocab.categories = std::max<std::size_t>(shape.vocab.categories, item.cid + 1);
    shape.vocab.shops = std::max<std::size_t>(shape.vocab.shops, item.sid + 1);
    shape.vocab.brands = std::max<std::size_t>(shape.vocab.brands, item.bid + 1);
    for (std::uint32_t e : item.entities) shape.vocab.entities = std::max<std::size_t>(shape.vocab.entities, e + 1);
  };
  for (const LabeledExample& ex : examples) {
    shape.users = std::max<std::size_t>(shape.users, ex.user + 1);
    shape.contexts = std::max<std::size_t>(shape.contexts, ex.ctx + 1);
    for (const auto& item : ex.seq.items) cover(item);
    cover(ex.cand);
  }
  return shape;
}

std::vector<const LabeledExample*> one_per_user(std::span<const LabeledExample> examples) {
  std::map<std::uint32_t, const LabeledExample*> first;
  for (const LabeledExample& ex : examples) first.emplace(ex.user, &ex);
  std::vector<const LabeledExample*> out;
  out.reserve(first.size());
  for (const auto& [user, ex] : first) out.push_back(ex);
  return out;
}

}  // namespace mfn::synth
