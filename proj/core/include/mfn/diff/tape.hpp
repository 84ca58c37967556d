#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "mfn/diff/matrix.hpp"
#include "mfn/diff/parameter.hpp"

namespace mfn::diff {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Compressed sparse rows describing a weighted row gather: output row r is
// sum_k weights[k] * table[ids[k]] for k in [offsets[r], offsets[r+1]).
struct SparseRows {
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> ids;
  std::vector<double> weights;

  std::size_t rows() const noexcept { return offsets.size() - 1; }
  void add(std::uint32_t id, double weight) {
    ids.push_back(id);
    weights.push_back(weight);
  }
  void finish_row() { offsets.push_back(ids.size()); }
};

// Records primitive applications for reverse-mode accumulation. Nodes are
// appended in evaluation order, so walking them backwards is a valid reverse
// topological order. A tape belongs to one forward pass on one thread.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);
  // Weighted row gather from a parameter table; gradients scatter back into
  // the touched rows only.
  Var gather(Parameter& table, const SparseRows& rows);
  // Same gather from a matrix that never receives gradients.
  Var gather(const Matrix& table, const SparseRows& rows);

  // Appends a derived node. `backprop` is only invoked when the node requires
  // a gradient and has received one.
  Var record(Matrix value, bool requires_grad, Backprop backprop);

  // Seeds d(loss)/d(loss) = 1 and runs reverse accumulation. Gradients of
  // reachable, non-frozen parameters are added to Parameter::grad.
  void backward(Var loss);

  // Drops every node; outstanding Vars become invalid.
  void clear();
  // Resets node gradients to zero without dropping nodes.
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  // Empty until the node receives a gradient.
  const Matrix& grad(std::size_t i) const;
  bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }
  // Gradient buffer of node i, allocated (zeroed) on first use.
  Matrix& grad_buffer(std::size_t i);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  std::vector<Node> nodes_;
};

}  // namespace mfn::diff
