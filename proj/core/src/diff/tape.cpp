#include "mfn/diff/tape.hpp"

#include "mfn/errors.hpp"

namespace mfn::diff {

const Matrix& Var::value() const { return tape_->value(index_); }
const Matrix& Var::grad() const { return tape_->grad(index_); }
bool Var::requires_grad() const { return tape_->requires_grad(index_); }

Var Tape::record(Matrix value, bool requires_grad, Backprop backprop) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, std::move(backprop)});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  if (p.frozen) return constant(p.value);
  Parameter* target = &p;
  return record(p.value, true, [target](Tape& t, std::size_t self) {
    add_into(target->grad, t.grad(self));
  });
}

namespace {

void check_rows(const SparseRows& rows, std::size_t table_rows) {
  for (auto id : rows.ids) {
    if (id >= table_rows) {
      throw LookupError("gather: row " + std::to_string(id) + " outside table of " +
                        std::to_string(table_rows) + " rows");
    }
  }
}

Matrix gather_value(const Matrix& table, const SparseRows& rows) {
  check_rows(rows, table.rows());
  Matrix out(rows.rows(), table.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      auto src = table.row(rows.ids[k]);
      const double w = rows.weights[k];
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += w * src[j];
    }
  }
  return out;
}

}  // namespace

Var Tape::gather(Parameter& table, const SparseRows& rows) {
  Matrix value = gather_value(table.value, rows);
  if (table.frozen) return constant(std::move(value));
  Parameter* target = &table;
  return record(std::move(value), true, [target, rows](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      auto gr = g.row(r);
      for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
        auto dst = target->grad.row(rows.ids[k]);
        const double w = rows.weights[k];
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += w * gr[j];
      }
    }
  });
}

Var Tape::gather(const Matrix& table, const SparseRows& rows) {
  return constant(gather_value(table, rows));
}

const Matrix& Tape::grad(std::size_t i) const { return nodes_[i].grad; }

Matrix& Tape::grad_buffer(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss belongs to a different tape");
  const Matrix& v = nodes_[loss.index_].value;
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("backward: loss must be a 1x1 scalar, got " + v.shape_string());
  }
  if (!nodes_[loss.index_].requires_grad) return;
  grad_buffer(loss.index_)(0, 0) += 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backprop || n.grad.empty()) continue;
    n.backprop(*this, i);
  }
}

void Tape::clear() { nodes_.clear(); }

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Matrix{};
}

}  // namespace mfn::diff
