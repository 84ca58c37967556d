#include "mfn/model/checkpoint_io.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "mfn/errors.hpp"

namespace mfn::model {

const features::TokenMatrix& CheckpointData::section(const std::string& name) const {
  for (const auto& [key, m] : sections) {
    if (key == name) return m;
  }
  throw InputError("checkpoint has no section '" + name + "'");
}

void write_checkpoint(std::ostream& out, const CheckpointData& data) {
  out << "mfn-checkpoint 1 " << data.kind << "\n@config\n";
  for (const auto& [key, value] : data.config) out << key << '=' << value << '\n';
  for (const auto& [name, m] : data.sections) {
    out << "@section " << name << '\n';
    features::write_token_matrix(out, m);
  }
}

CheckpointData read_checkpoint(std::istream& in) {
  CheckpointData data;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("mfn-checkpoint 1 ", 0) != 0) {
    throw ParseError("not an mfn checkpoint (expected 'mfn-checkpoint 1 <kind>')", line_no);
  }
  data.kind = line.substr(17);
  ++line_no;
  if (!std::getline(in, line) || line != "@config") throw ParseError("expected '@config'", line_no);

  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("@section ", 0) == 0) {
      std::string name = line.substr(9);
      // The token matrix reader consumes exactly its declared rows.
      features::TokenMatrix m = features::read_token_matrix(in, line_no + 1, false);
      line_no += m.values.rows() + 1;
      data.sections.emplace_back(std::move(name), std::move(m));
      continue;
    }
    if (line.empty()) continue;
    if (!data.sections.empty()) throw ParseError("unexpected line outside a section", line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config line without '='", line_no);
    data.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return data;
}

}  // namespace mfn::model
