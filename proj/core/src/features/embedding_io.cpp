#include "mfn/features/embedding_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "mfn/errors.hpp"

namespace mfn::features {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

bool is_blank(std::string_view line) { return split_ws(line).empty(); }

void format_double(std::string& out, double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

void write_token_matrix(std::ostream& out, const TokenMatrix& m) {
  if (m.tokens.size() != m.values.rows()) {
    throw DimensionError("token matrix has " + std::to_string(m.tokens.size()) + " tokens for " +
                         std::to_string(m.values.rows()) + " rows");
  }
  std::string line = std::to_string(m.values.rows()) + " " + std::to_string(m.values.cols()) + "\n";
  out << line;
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    line = m.tokens[r];
    for (double v : m.values.row(r)) {
      line += ' ';
      format_double(line, v);
    }
    line += '\n';
    out << line;
  }
}

TokenMatrix read_token_matrix(std::istream& in, std::size_t first_line, bool require_eof) {
  std::string line;
  std::size_t line_no = first_line;
  if (!std::getline(in, line)) throw ParseError("missing header '<count> <dim>'", line_no);
  const auto header = split_ws(line);
  std::size_t count = 0, dim = 0;
  if (header.size() != 2 || !parse_size(header[0], count) || !parse_size(header[1], dim) || dim == 0) {
    throw ParseError("malformed header '" + line + "', expected '<count> <dim>'", line_no);
  }

  TokenMatrix m;
  m.tokens.reserve(count);
  std::vector<double> data;
  data.reserve(count * dim);
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < count; ++r) {
    ++line_no;
    if (!std::getline(in, line)) {
      throw ParseError("expected " + std::to_string(count) + " data lines, found " + std::to_string(r), line_no);
    }
    const auto parts = split_ws(line);
    if (parts.size() != dim + 1) {
      throw ParseError("expected token plus " + std::to_string(dim) + " values, found " +
                           std::to_string(parts.empty() ? 0 : parts.size() - 1) + " values",
                       line_no);
    }
    std::string token(parts[0]);
    if (!seen.insert(token).second) throw ParseError("duplicate token '" + token + "'", line_no);
    for (std::size_t j = 1; j <= dim; ++j) {
      double v = 0.0;
      if (!parse_double(parts[j], v)) {
        throw ParseError("invalid value '" + std::string(parts[j]) + "' for token '" + token + "'", line_no);
      }
      data.push_back(v);
    }
    m.tokens.push_back(std::move(token));
  }
  if (require_eof) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!is_blank(line)) {
        throw ParseError("unexpected data after " + std::to_string(count) + " declared rows", line_no);
      }
    }
  }
  m.values = diff::Matrix(count, dim, std::move(data));
  return m;
}

void save_token_matrix(const TokenMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  write_token_matrix(out, m);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

TokenMatrix load_token_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return read_token_matrix(in);
}

TokenMatrix label_rows(const diff::Matrix& values, const std::string& prefix) {
  TokenMatrix m;
  m.values = values;
  m.tokens.reserve(values.rows());
  for (std::size_t i = 0; i < values.rows(); ++i) m.tokens.push_back(prefix + ":" + std::to_string(i));
  return m;
}

diff::Matrix unlabel_rows(const TokenMatrix& m, const std::string& prefix) {
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    const std::string expected = prefix + ":" + std::to_string(i);
    if (m.tokens[i] != expected) {
      throw ParseError("expected token '" + expected + "', found '" + m.tokens[i] + "'", i + 2);
    }
  }
  return m.values;
}

TokenMatrix to_token_matrix(const EmbeddingTables& tables) {
  std::size_t total = 0;
  for (const auto& t : tables.fields) total += t.rows();
  TokenMatrix m;
  m.values = diff::Matrix(total, tables.dim);
  m.tokens.reserve(total);
  std::size_t r = 0;
  for (Field f : kAllFields) {
    const diff::Matrix& t = tables.table(f);
    for (std::size_t i = 0; i < t.rows(); ++i, ++r) {
      m.tokens.push_back(std::string(field_token(f)) + ":" + std::to_string(i));
      std::copy(t.row(i).begin(), t.row(i).end(), m.values.row(r).begin());
    }
  }
  return m;
}

EmbeddingTables from_token_matrix(const TokenMatrix& m) {
  struct Entry {
    std::size_t id;
    std::size_t row;
  };
  std::array<std::vector<Entry>, kFieldCount> entries;
  for (std::size_t r = 0; r < m.tokens.size(); ++r) {
    const std::string& token = m.tokens[r];
    const auto colon = token.find(':');
    const auto field = colon == std::string::npos ? std::nullopt : parse_field(std::string_view(token).substr(0, colon));
    std::size_t id = 0;
    if (!field || !parse_size(std::string_view(token).substr(colon + 1), id)) {
      throw ParseError("token '" + token + "' is not '<field>:<id>' with a known field", r + 2);
    }
    entries[field_index(*field)].push_back({id, r});
  }
  EmbeddingTables tables;
  tables.dim = m.values.cols();
  for (Field f : kAllFields) {
    auto& list = entries[field_index(f)];
    diff::Matrix t(list.size(), tables.dim);
    for (const Entry& e : list) {
      if (e.id >= list.size()) {
        throw ParseError("id " + std::to_string(e.id) + " of field " + std::string(field_token(f)) +
                             " leaves gaps in a table of " + std::to_string(list.size()) + " rows",
                         e.row + 2);
      }
      std::copy(m.values.row(e.row).begin(), m.values.row(e.row).end(), t.row(e.id).begin());
    }
    tables.table(f) = std::move(t);
  }
  return tables;
}

void save_embeddings(const EmbeddingTables& tables, const std::filesystem::path& path) {
  save_token_matrix(to_token_matrix(tables), path);
}

EmbeddingTables load_embeddings(const std::filesystem::path& path) {
  return from_token_matrix(load_token_matrix(path));
}

}  // namespace mfn::features
