#include "svat/parameters.hpp"

#include <cmath>

#include "svat/errors.hpp"

namespace svat {

void ParameterStore::add(std::string name, diff::Tensor value) {
  if (contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first == name) return i;
  }
  throw UsageError("unknown parameter '" + name + "'");
}

diff::Tensor& ParameterStore::at(const std::string& name) { return entries_[index_of(name)].second; }

const diff::Tensor& ParameterStore::at(const std::string& name) const {
  return entries_[index_of(name)].second;
}

std::size_t ParameterStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

bool ParameterStore::bit_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (!entries_[i].second.bit_equal(other.entries_[i].second)) return false;
  }
  return true;
}

BoundParams::BoundParams(const ParameterStore& store, diff::Tape& tape, bool requires_grad)
    : store_(&store) {
  vars_.reserve(store.size());
  for (const auto& [name, value] : store) vars_.push_back(tape.leaf(value, requires_grad));
}

diff::Var BoundParams::operator[](const std::string& name) const {
  return vars_[store_->index_of(name)];
}

ParamGrads BoundParams::gradients(const diff::Gradients& grads) const {
  ParamGrads out;
  out.reserve(vars_.size());
  for (const auto& v : vars_) out.push_back(grads[v]);
  return out;
}

diff::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  diff::Tensor w(fan_in, fan_out);
  for (double& v : w.data()) v = dist(rng);
  return w;
}

}  // namespace svat
