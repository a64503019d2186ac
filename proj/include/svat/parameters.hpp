#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "svat/tape.hpp"
#include "svat/tensor.hpp"

namespace svat {

// Named learnable tensors in insertion order. Names are unique and stable;
// the order fixes the layout of gradients, optimizer state and checkpoints.
class ParameterStore {
 public:
  using Entry = std::pair<std::string, diff::Tensor>;

  void add(std::string name, diff::Tensor value);
  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  diff::Tensor& at(const std::string& name);
  const diff::Tensor& at(const std::string& name) const;
  diff::Tensor& at(std::size_t index) { return entries_.at(index).second; }
  const diff::Tensor& at(std::size_t index) const { return entries_.at(index).second; }
  const std::string& name(std::size_t index) const { return entries_.at(index).first; }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool bit_equal(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
};

// Per-parameter gradients, aligned with ParameterStore order.
using ParamGrads = std::vector<diff::Tensor>;

// Parameters registered as leaves of one tape.
class BoundParams {
 public:
  BoundParams(const ParameterStore& store, diff::Tape& tape, bool requires_grad = true);

  diff::Var operator[](const std::string& name) const;
  diff::Var at(std::size_t index) const { return vars_.at(index); }
  std::size_t size() const noexcept { return vars_.size(); }

  // Gradients for every parameter (zeros for parameters the root ignores).
  ParamGrads gradients(const diff::Gradients& grads) const;

 private:
  const ParameterStore* store_;
  std::vector<diff::Var> vars_;
};

// Glorot-uniform weight matrix (fan_in x fan_out).
diff::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace svat
