#include "svat/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svat/errors.hpp"
#include "svat/kernels.hpp"

namespace svat::diff {

namespace kp = svat::kernels::parallel;

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::concat: return "concat";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softplus: return "softplus";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::max0: return "max0";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::scale: return "scale";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::add_row: return "add_row";
    case OpKind::row_sum: return "row_sum";
    case OpKind::normalize_rows: return "normalize_rows";
    case OpKind::pairwise_diff: return "pairwise_diff";
    case OpKind::slice_cols: return "slice_cols";
  }
  return "unknown";
}

// --- Var / Gradients / Tape ------------------------------------------------

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw UsageError("Var is not bound to a tape");
  return tape_->nodes_[id_].value;
}

bool Var::requires_grad() const {
  if (tape_ == nullptr) throw UsageError("Var is not bound to a tape");
  return tape_->nodes_[id_].requires_grad;
}

OpKind Var::kind() const {
  if (tape_ == nullptr) throw UsageError("Var is not bound to a tape");
  return tape_->nodes_[id_].kind;
}

Tensor Gradients::operator[](Var v) const {
  if (v.tape() != tape_) throw UsageError("gradient requested for a Var of another tape");
  if (v.id() < reached_.size() && reached_[v.id()]) return grads_[v.id()];
  return Tensor(v.rows(), v.cols(), 0.0);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  require_finite(value, "leaf");
  nodes_.push_back(Node{OpKind::leaf, std::move(value), requires_grad, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs,
                 BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name(kind)) + ": non-finite result");
  }
  bool needs = false;
  for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
  if (!needs) backward = nullptr;
  nodes_.push_back(Node{kind, std::move(value), needs, std::move(inputs), std::move(backward)});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var root) const {
  if (root.tape() != this || root.id() >= nodes_.size()) {
    throw UsageError("backward: root is not a node of this tape");
  }
  const Node& root_node = nodes_[root.id()];
  if (root_node.value.rows() != 1 || root_node.value.cols() != 1) {
    throw UsageError("backward: root must be a scalar, got " + root_node.value.shape_string());
  }

  Gradients out;
  out.tape_ = this;
  out.grads_.resize(root.id() + 1);
  out.reached_.assign(root.id() + 1, false);
  out.grads_[root.id()] = Tensor(1, 1, 1.0);
  out.reached_[root.id()] = true;

  std::vector<Tensor*> slots;
  for (std::size_t idx = root.id() + 1; idx-- > 0;) {
    if (!out.reached_[idx]) continue;
    const Node& node = nodes_[idx];
    if (!node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!out.reached_[in]) {
        out.grads_[in] = Tensor(nodes_[in].value.rows(), nodes_[in].value.cols(), 0.0);
        out.reached_[in] = true;
      }
      slots[k] = &out.grads_[in];
    }
    node.backward(node.value, out.grads_[idx], slots);
  }
  return out;
}

// --- primitive helpers -----------------------------------------------------

namespace {

Tape& common_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw UsageError(std::string(op) + ": operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw UsageError("operand is not bound to a tape");
  return *a.tape();
}

kernels::MatView view(const Tensor& t) { return {t.data().data(), t.rows(), t.cols()}; }
kernels::MutMatView mut_view(Tensor& t) { return {t.data().data(), t.rows(), t.cols()}; }

void accumulate(Tensor* slot, const Tensor& g) {
  if (slot == nullptr) return;
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Elementwise unary op. `deriv(x, y)` returns dy/dx given input and output.
template <class F, class D>
Var unary(OpKind kind, Var a, F f, D deriv) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape.record(kind, std::move(y), {a.id()},
                     [a, deriv](const Tensor& out, const Tensor& g,
                                       std::span<Tensor* const> gin) {
                       const Tensor& x = a.value();
                       auto dst = gin[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) {
                         dst[i] += g[i] * deriv(x[i], out[i]);
                       }
                     });
}

}  // namespace

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Tensor normalize_rows_value(const Tensor& a, double radius) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row_span(r);
    double sq = 0.0;
    for (double v : src) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm == 0.0) continue;
    auto dst = out.row_span(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = radius * (src[c] / norm);
  }
  return out;
}

// --- primitives ------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape_string() + " x " + bv.shape_string());
  }
  Tensor c(av.rows(), bv.cols());
  kp::gemm(view(av), view(bv), mut_view(c));
  return tape.record(OpKind::matmul, std::move(c), {a.id(), b.id()},
                     [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       if (gin[0] != nullptr) {
                         Tensor da(a.rows(), a.cols());
                         kp::gemm_nt(view(g), view(b.value()), mut_view(da));
                         accumulate(gin[0], da);
                       }
                       if (gin[1] != nullptr) {
                         Tensor db(b.rows(), b.cols());
                         kp::gemm_tn(view(a.value()), view(g), mut_view(db));
                         accumulate(gin[1], db);
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = common_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b.value()[i];
  return tape.record(OpKind::add, std::move(c), {a.id(), b.id()},
                     [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       accumulate(gin[0], g);
                       accumulate(gin[1], g);
                     });
}

Var sub(Var a, Var b) {
  Tape& tape = common_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b.value()[i];
  return tape.record(OpKind::sub, std::move(c), {a.id(), b.id()},
                     [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       accumulate(gin[0], g);
                       if (gin[1] != nullptr) {
                         auto dst = gin[1]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= g[i];
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = common_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b.value()[i];
  return tape.record(OpKind::mul, std::move(c), {a.id(), b.id()},
                     [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       const Tensor& av = a.value();
                       const Tensor& bv = b.value();
                       if (gin[0] != nullptr) {
                         auto dst = gin[0]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * bv[i];
                       }
                       if (gin[1] != nullptr) {
                         auto dst = gin[1]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * av[i];
                       }
                     });
}

Var div(Var a, Var b) {
  Tape& tape = common_tape(a, b, "div");
  require_same_shape(a.value(), b.value(), "div");
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] /= b.value()[i];
  return tape.record(OpKind::div, std::move(c), {a.id(), b.id()},
                     [b](const Tensor& out, const Tensor& g, std::span<Tensor* const> gin) {
                       const Tensor& bv = b.value();
                       if (gin[0] != nullptr) {
                         auto dst = gin[0]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] / bv[i];
                       }
                       if (gin[1] != nullptr) {
                         auto dst = gin[1]->data();
                         for (std::size_t i = 0; i < dst.size(); ++i) {
                           dst[i] -= g[i] * out[i] / bv[i];
                         }
                       }
                     });
}

Var concat(Var a, Var b) {
  Tape& tape = common_tape(a, b, "concat");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat: row count " + av.shape_string() + " vs " + bv.shape_string());
  }
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor c(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row_span(r).begin(), ca, c.row_span(r).begin());
    std::copy_n(bv.row_span(r).begin(), cb, c.row_span(r).begin() + ca);
  }
  return tape.record(OpKind::concat, std::move(c), {a.id(), b.id()},
                     [ca, cb](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         auto src = g.row_span(r);
                         if (gin[0] != nullptr) {
                           auto dst = gin[0]->row_span(r);
                           for (std::size_t c = 0; c < ca; ++c) dst[c] += src[c];
                         }
                         if (gin[1] != nullptr) {
                           auto dst = gin[1]->row_span(r);
                           for (std::size_t c = 0; c < cb; ++c) dst[c] += src[ca + c];
                         }
                       }
                     });
}

Var tanh(Var a) {
  return unary(
      OpKind::tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      OpKind::sigmoid, a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(OpKind::softplus, a, softplus_value, [](double x, double) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Var square(Var a) {
  return unary(
      OpKind::square, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
  return unary(
      OpKind::exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      OpKind::log, a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var max0(Var a) {
  return unary(
      OpKind::max0, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var scale(Var a, double factor) {
  if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
  return unary(
      OpKind::scale, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var sum(Var a) {
  Tape& tape = tape_of(a);
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return tape.record(OpKind::sum, Tensor::scalar(acc), {a.id()},
                     [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       const double gv = g[0];
                       for (double& d : gin[0]->data()) d += gv;
                     });
}

Var mean(Var a) {
  Tape& tape = tape_of(a);
  const auto n = static_cast<double>(a.value().size());
  if (a.value().size() == 0) throw DimensionError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return tape.record(OpKind::mean, Tensor::scalar(acc / n), {a.id()},
                     [n](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       const double gv = g[0] / n;
                       for (double& d : gin[0]->data()) d += gv;
                     });
}

Var l2_norm(Var a) {
  Tape& tape = tape_of(a);
  double sq = 0.0;
  for (double v : a.value().data()) sq += v * v;
  return tape.record(OpKind::l2_norm, Tensor::scalar(std::sqrt(sq)), {a.id()},
                     [a](const Tensor& out, const Tensor& g, std::span<Tensor* const> gin) {
                       const double norm = out[0];
                       if (norm == 0.0) return;
                       const Tensor& x = a.value();
                       auto dst = gin[0]->data();
                       for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * x[i] / norm;
                     });
}

Var add_row(Var a, Var row) {
  Tape& tape = common_tape(a, row, "add_row");
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: " + av.shape_string() + " + " + rv.shape_string());
  }
  Tensor c = av;
  for (std::size_t r = 0; r < c.rows(); ++r) {
    auto dst = c.row_span(r);
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += rv[k];
  }
  return tape.record(OpKind::add_row, std::move(c), {a.id(), row.id()},
                     [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       accumulate(gin[0], g);
                       if (gin[1] != nullptr) {
                         auto dst = gin[1]->data();
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           auto src = g.row_span(r);
                           for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
                         }
                       }
                     });
}

Var row_sum(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor c(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double acc = 0.0;
    for (double v : av.row_span(r)) acc += v;
    c[r] = acc;
  }
  return tape.record(OpKind::row_sum, std::move(c), {a.id()},
                     [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       for (std::size_t r = 0; r < gin[0]->rows(); ++r) {
                         for (double& d : gin[0]->row_span(r)) d += g[r];
                       }
                     });
}

Var normalize_rows(Var a, double radius) {
  Tape& tape = tape_of(a);
  if (!std::isfinite(radius)) throw NumericError("normalize_rows: non-finite radius");
  return tape.record(
      OpKind::normalize_rows, normalize_rows_value(a.value(), radius), {a.id()},
      [a, radius](const Tensor& out, const Tensor& g, std::span<Tensor* const> gin) {
        // d/da (r a / |a|) applied to g: (r / |a|) (g - u (u . g)), u = a / |a|.
        const Tensor& x = a.value();
        for (std::size_t r = 0; r < x.rows(); ++r) {
          auto xr = x.row_span(r);
          double sq = 0.0;
          for (double v : xr) sq += v * v;
          const double norm = std::sqrt(sq);
          if (norm == 0.0) continue;
          auto gr = g.row_span(r);
          auto yr = out.row_span(r);
          double ug = 0.0;
          for (std::size_t c = 0; c < xr.size(); ++c) ug += (yr[c] / radius) * gr[c];
          auto dst = gin[0]->row_span(r);
          for (std::size_t c = 0; c < xr.size(); ++c) {
            dst[c] += (radius / norm) * (gr[c] - (yr[c] / radius) * ug);
          }
        }
      });
}

Var pairwise_diff(Var column) {
  Tape& tape = tape_of(column);
  const Tensor& v = column.value();
  if (v.cols() != 1) throw DimensionError("pairwise_diff expects a column, got " + v.shape_string());
  const std::size_t n = v.rows();
  Tensor d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d(i, j) = v[i] - v[j];
  }
  return tape.record(OpKind::pairwise_diff, std::move(d), {column.id()},
                     [n](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       auto dst = gin[0]->data();
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           dst[i] += g(i, j);
                           dst[j] -= g(i, j);
                         }
                       }
                     });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  if (start + count > av.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " + av.shape_string());
  }
  Tensor c(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.row_span(r).begin() + static_cast<std::ptrdiff_t>(start), count,
                c.row_span(r).begin());
  }
  return tape.record(OpKind::slice_cols, std::move(c), {a.id()},
                     [start](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                       for (std::size_t r = 0; r < g.rows(); ++r) {
                         auto src = g.row_span(r);
                         auto dst = gin[0]->row_span(r);
                         for (std::size_t c = 0; c < src.size(); ++c) dst[start + c] += src[c];
                       }
                     });
}

Var forward_primitive(OpKind kind, std::span<const Var> inputs, double param,
                      std::size_t param2) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw UsageError(std::string(op_name(kind)) + " expects " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(inputs[0], inputs[1]);
    case OpKind::sub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::mul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::div: need(2); return div(inputs[0], inputs[1]);
    case OpKind::concat: need(2); return concat(inputs[0], inputs[1]);
    case OpKind::add_row: need(2); return add_row(inputs[0], inputs[1]);
    case OpKind::tanh: need(1); return tanh(inputs[0]);
    case OpKind::sigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::softplus: need(1); return softplus(inputs[0]);
    case OpKind::square: need(1); return square(inputs[0]);
    case OpKind::sum: need(1); return sum(inputs[0]);
    case OpKind::mean: need(1); return mean(inputs[0]);
    case OpKind::max0: need(1); return max0(inputs[0]);
    case OpKind::l2_norm: need(1); return l2_norm(inputs[0]);
    case OpKind::scale: need(1); return scale(inputs[0], param);
    case OpKind::exp: need(1); return exp(inputs[0]);
    case OpKind::log: need(1); return log(inputs[0]);
    case OpKind::row_sum: need(1); return row_sum(inputs[0]);
    case OpKind::normalize_rows: need(1); return normalize_rows(inputs[0], param);
    case OpKind::pairwise_diff: need(1); return pairwise_diff(inputs[0]);
    case OpKind::slice_cols:
      need(1);
      return slice_cols(inputs[0], static_cast<std::size_t>(param), param2);
    case OpKind::leaf: break;
  }
  throw UsageError("forward_primitive: leaf is not an operation");
}

}  // namespace svat::diff
