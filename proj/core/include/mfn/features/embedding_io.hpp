#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfn/diff/matrix.hpp"
#include "mfn/features/embedding.hpp"

namespace mfn::features {

// Rows labelled by token, as stored in the word2vec-style text format:
//
//   <count> <dim>
//   <token> v1 ... v_dim
//
// Values are written with 17 significant digits so a round trip is exact.
struct TokenMatrix {
  std::vector<std::string> tokens;
  diff::Matrix values;
};

void write_token_matrix(std::ostream& out, const TokenMatrix& m);

// Reads one header plus `count` data lines. `first_line` is the line number of
// the header, used in error messages. With `require_eof`, trailing non-blank
// lines are an error.
TokenMatrix read_token_matrix(std::istream& in, std::size_t first_line = 1, bool require_eof = true);

void save_token_matrix(const TokenMatrix& m, const std::filesystem::path& path);
TokenMatrix load_token_matrix(const std::filesystem::path& path);

// Labels rows "<prefix>:<i>".
TokenMatrix label_rows(const diff::Matrix& values, const std::string& prefix);
// Inverse of label_rows; tokens must be exactly prefix:0 .. prefix:n-1 in order.
diff::Matrix unlabel_rows(const TokenMatrix& m, const std::string& prefix);

TokenMatrix to_token_matrix(const EmbeddingTables& tables);
EmbeddingTables from_token_matrix(const TokenMatrix& m);

void save_embeddings(const EmbeddingTables& tables, const std::filesystem::path& path);
EmbeddingTables load_embeddings(const std::filesystem::path& path);

}  // namespace mfn::features
