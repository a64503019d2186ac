#pragma once

// Reverse-mode automatic differentiation over rank-2 f64 tensors.
//
// A Tape records every primitive evaluated on it in creation order, which is
// a topological order by construction. `Tape::backward` walks the record
// once, from the root down, and returns the gradient of the scalar root with
// respect to every node that requires a gradient.
//
// A Tape and the Vars it hands out form one single-threaded context.
// Independent tapes may be used from different threads.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "svat/tensor.hpp"

namespace svat::diff {

class Tape;

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  div,
  concat,  // column-wise: [a | b]
  tanh,
  sigmoid,
  softplus,
  square,
  sum,
  mean,
  max0,
  l2_norm,
  scale,
  exp,
  log,
  add_row,         // a (m x n) + b (1 x n) repeated over rows
  row_sum,         // m x n -> m x 1
  normalize_rows,  // each row rescaled to l2 norm `param`; zero rows stay zero
  pairwise_diff,   // v (m x 1) -> D (m x m), D_ij = v_i - v_j
  slice_cols,      // columns [start, start + count)
};

std::string_view op_name(OpKind kind);

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  OpKind kind() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Gradients {
 public:
  // Gradient for `v`, zeros of v's shape if the root does not depend on it.
  Tensor operator[](Var v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
  std::vector<bool> reached_;
};

class Tape {
 public:
  // grad_out is d(root)/d(this node) and value the node's own output;
  // accumulate into the input slots that are non-null (null means that input
  // does not require a gradient).
  using BackwardFn = std::function<void(const Tensor& value, const Tensor& grad_out,
                                        std::span<Tensor* const> grad_in)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Throws UsageError unless root is a 1 x 1 node of this tape.
  Gradients backward(Var root) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Used by the primitive implementations. Marks the node as requiring a
  // gradient when any input does; `backward` is dropped otherwise.
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  friend class Var;
  friend class Gradients;

  struct Node {
    OpKind kind;
    Tensor value;
    bool requires_grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

// --- primitives ----------------------------------------------------------
// All operands must live on the same tape. Shape mismatches raise
// DimensionError; non-finite results raise NumericError.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var concat(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var max0(Var a);
// Gradient at the zero tensor is defined as zero.
Var l2_norm(Var a);
Var scale(Var a, double factor);
Var exp(Var a);
Var log(Var a);
Var add_row(Var a, Var row);
Var row_sum(Var a);
Var normalize_rows(Var a, double radius);
Var pairwise_diff(Var column);
Var slice_cols(Var a, std::size_t start, std::size_t count);

// Uniform entry point over the primitive set; `param` is the factor for
// scale, the radius for normalize_rows and the start column for slice_cols
// (whose count is then `param2`). Used by the gradient-check harness.
Var forward_primitive(OpKind kind, std::span<const Var> inputs, double param = 1.0,
                      std::size_t param2 = 0);

// Non-differentiable helpers used by the stop-gradient paths.
double softplus_value(double x);
// Row-wise radius * a_i / ||a_i||, with zero rows mapped to zero.
Tensor normalize_rows_value(const Tensor& a, double radius);

}  // namespace svat::diff
