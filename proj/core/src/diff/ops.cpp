#include "mfn/diff/ops.hpp"

#include <algorithm>
#include <cmath>

#include "mfn/errors.hpp"

namespace mfn::diff {
namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an invalid Var");
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

[[noreturn]] void mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

// Adds src into the gradient of node i if that node wants one.
void accumulate(Tape& t, std::size_t i, const Matrix& src) {
  if (t.requires_grad(i)) add_into(t.grad_buffer(i), src);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix v = matmul(a.value(), b.value());
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) add_into(t.grad_buffer(ia), matmul_bt(g, t.value(ib)));
    if (t.requires_grad(ib)) add_into(t.grad_buffer(ib), matmul_at(t.value(ia), g));
  });
}

Var matmul_bt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix v = matmul_bt(a.value(), b.value());
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    // c = a b^T: da = g b, db = g^T a
    if (t.requires_grad(ia)) add_into(t.grad_buffer(ia), matmul(g, t.value(ib)));
    if (t.requires_grad(ib)) add_into(t.grad_buffer(ib), matmul_at(g, t.value(ia)));
  });
}

Var matmul_at(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Matrix v = matmul_at(a.value(), b.value());
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    // c = a^T b: da = b g^T, db = a g
    if (t.requires_grad(ia)) add_into(t.grad_buffer(ia), matmul_bt(t.value(ib), g));
    if (t.requires_grad(ib)) add_into(t.grad_buffer(ib), matmul(t.value(ia), g));
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const std::size_t ia = a.index();
  return t.record(transpose(a.value()), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    add_into(t.grad_buffer(ia), transpose(t.grad(self)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (!a.value().same_shape(b.value())) mismatch("add", a.value(), b.value());
  Matrix v = a.value();
  add_into(v, b.value());
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (!a.value().same_shape(b.value())) mismatch("sub", a.value(), b.value());
  Matrix v = a.value();
  auto vd = v.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < vd.size(); ++i) vd[i] -= bd[i];
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, ia, g);
    if (t.requires_grad(ib)) {
      auto dst = t.grad_buffer(ib).data();
      auto gd = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= gd[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (!a.value().same_shape(b.value())) mismatch("hadamard", a.value(), b.value());
  Matrix v = a.value();
  auto vd = v.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < vd.size(); ++i) vd[i] *= bd[i];
  const std::size_t ia = a.index(), ib = b.index();
  return t.record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& t, std::size_t self) {
    auto g = t.grad(self).data();
    if (t.requires_grad(ia)) {
      auto dst = t.grad_buffer(ia).data();
      auto other = t.value(ib).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
    if (t.requires_grad(ib)) {
      auto dst = t.grad_buffer(ib).data();
      auto other = t.value(ia).data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  Matrix v = a.value();
  for (double& x : v.data()) x *= s;
  const std::size_t ia = a.index();
  return t.record(std::move(v), a.requires_grad(), [ia, s](Tape& t, std::size_t self) {
    auto g = t.grad(self).data();
    auto dst = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * g[i];
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) mismatch("add_row", a.value(), row.value());
  Matrix v = a.value();
  auto r = row.value().row(0);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto vr = v.row(i);
    for (std::size_t j = 0; j < vr.size(); ++j) vr[j] += r[j];
  }
  const std::size_t ia = a.index(), ir = row.index();
  return t.record(std::move(v), a.requires_grad() || row.requires_grad(), [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    accumulate(t, ia, g);
    if (t.requires_grad(ir)) {
      auto dst = t.grad_buffer(ir).row(0);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto gr = g.row(i);
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += gr[j];
      }
    }
  });
}

Var repeat_row(Var row, std::size_t n) {
  Tape& t = row.tape();
  if (row.rows() != 1) throw DimensionError("repeat_row: expected a single row, got " + row.value().shape_string());
  Matrix v(n, row.cols());
  auto r = row.value().row(0);
  for (std::size_t i = 0; i < n; ++i) std::copy(r.begin(), r.end(), v.row(i).begin());
  const std::size_t ir = row.index();
  return t.record(std::move(v), row.requires_grad(), [ir](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    auto dst = t.grad_buffer(ir).row(0);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gr = g.row(i);
      for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += gr[j];
    }
  });
}

Var softmax_rows(Var x) {
  Tape& t = x.tape();
  if (x.value().empty()) throw ContractError("softmax_rows: empty input");
  const std::size_t ix = x.index();
  return t.record(softmax_rows(x.value()), x.requires_grad(), [ix](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix& dst = t.grad_buffer(ix);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto yr = y.row(i);
      auto gr = g.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
      auto d = dst.row(i);
      for (std::size_t j = 0; j < yr.size(); ++j) d[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var swish(Var x) {
  Tape& t = x.tape();
  const std::size_t ix = x.index();
  return t.record(swish(x.value()), x.requires_grad(), [ix](Tape& t, std::size_t self) {
    auto in = t.value(ix).data();
    auto g = t.grad(self).data();
    auto dst = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double s = sigmoid(in[i]);
      dst[i] += g[i] * (s + in[i] * s * (1.0 - s));
    }
  });
}

Var sigmoid(Var x) {
  Tape& t = x.tape();
  Matrix v = x.value();
  for (double& e : v.data()) e = sigmoid(e);
  const std::size_t ix = x.index();
  return t.record(std::move(v), x.requires_grad(), [ix](Tape& t, std::size_t self) {
    auto y = t.value(self).data();
    auto g = t.grad(self).data();
    auto dst = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < y.size(); ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_clamped(Var x, double floor) {
  Tape& t = x.tape();
  Matrix v = x.value();
  for (double& e : v.data()) e = std::log(std::max(e, floor));
  const std::size_t ix = x.index();
  return t.record(std::move(v), x.requires_grad(), [ix, floor](Tape& t, std::size_t self) {
    auto in = t.value(ix).data();
    auto g = t.grad(self).data();
    auto dst = t.grad_buffer(ix).data();
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > floor) dst[i] += g[i] / in[i];
    }
  });
}

Var sum(Var a) {
  Tape& t = a.tape();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.index();
  return t.record(Matrix(1, 1, s), a.requires_grad(), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    for (double& d : t.grad_buffer(ia).data()) d += g;
  });
}

Var mean_rows(Var a) {
  Tape& t = a.tape();
  const Matrix& in = a.value();
  if (in.rows() == 0) throw ContractError("mean_rows: no rows");
  Matrix v(1, in.cols());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto r = in.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) v(0, j) += r[j];
  }
  const double inv = 1.0 / static_cast<double>(in.rows());
  for (double& e : v.data()) e *= inv;
  const std::size_t ia = a.index();
  return t.record(std::move(v), a.requires_grad(), [ia, inv](Tape& t, std::size_t self) {
    auto g = t.grad(self).row(0);
    Matrix& dst = t.grad_buffer(ia);
    for (std::size_t i = 0; i < dst.rows(); ++i) {
      auto d = dst.row(i);
      for (std::size_t j = 0; j < d.size(); ++j) d[j] += g[j] * inv;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& t = parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool needs = false;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) mismatch("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    needs = needs || p.requires_grad();
  }
  Matrix v(rows, cols);
  std::vector<std::size_t> idx, offset;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Matrix& m = p.value();
    for (std::size_t i = 0; i < rows; ++i) std::copy(m.row(i).begin(), m.row(i).end(), v.row(i).begin() + at);
    idx.push_back(p.index());
    offset.push_back(at);
    at += m.cols();
  }
  return t.record(std::move(v), needs, [idx, offset](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (!t.requires_grad(idx[p])) continue;
      Matrix& dst = t.grad_buffer(idx[p]);
      for (std::size_t i = 0; i < dst.rows(); ++i) {
        auto gr = g.row(i);
        auto d = dst.row(i);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] += gr[offset[p] + j];
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Tape& t = parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool needs = false;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.cols() != cols) mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    needs = needs || p.requires_grad();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  std::vector<std::size_t> idx, offset;
  std::size_t at = 0;
  for (const Var& p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
    idx.push_back(p.index());
    offset.push_back(at);
    at += p.rows();
  }
  return t.record(Matrix(rows, cols, std::move(data)), needs, [idx, offset](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t p = 0; p < idx.size(); ++p) {
      if (!t.requires_grad(idx[p])) continue;
      Matrix& dst = t.grad_buffer(idx[p]);
      for (std::size_t i = 0; i < dst.rows(); ++i) {
        auto gr = g.row(offset[p] + i);
        auto d = dst.row(i);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] += gr[j];
      }
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = a.tape();
  const Matrix& in = a.value();
  if (begin + count > in.cols()) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + in.shape_string());
  }
  Matrix v(in.rows(), count);
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) v(i, j) = in(i, begin + j);
  const std::size_t ia = a.index();
  return t.record(std::move(v), a.requires_grad(), [ia, begin](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    Matrix& dst = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dst(i, begin + j) += g(i, j);
  });
}

Var binary_cross_entropy(Var probs, std::span<const double> labels, double clamp) {
  Tape& t = probs.tape();
  const Matrix& p = probs.value();
  if (p.cols() != 1 || p.rows() != labels.size()) {
    throw DimensionError("binary_cross_entropy: probabilities " + p.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  if (p.rows() == 0) throw ContractError("binary_cross_entropy: empty batch");
  const double n = static_cast<double>(p.rows());
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const double q = std::clamp(p(i, 0), clamp, 1.0 - clamp);
    total += labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  std::vector<double> y(labels.begin(), labels.end());
  const std::size_t ip = probs.index();
  return t.record(Matrix(1, 1, -total / n), probs.requires_grad(), [ip, y = std::move(y), clamp, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& p = t.value(ip);
    Matrix& dst = t.grad_buffer(ip);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const double q = p(i, 0);
      if (q < clamp || q > 1.0 - clamp) continue;
      dst(i, 0) += -g * (y[i] / q - (1.0 - y[i]) / (1.0 - q)) / n;
    }
  });
}

}  // namespace mfn::diff
