#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bundleforge/errors.hpp"
#include "bundleforge/tensor.hpp"

namespace bundleforge::num {

// Ordered name -> tensor map. Iteration order is the registration order,
// which keeps optimizer updates and checkpoints stable across runs.
template <class T>
class ParamTable {
 public:
  void add(const std::string& name, Tensor<T> t) {
    if (index_.count(name))
      throw ContractError("param table: duplicate name '" + name + "'");
    if (!t.requires_grad()) t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.emplace_back(name, std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("param table: unknown name '" + name + "'");
    return entries_[it->second].second;
  }

  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("param table: unknown name '" + name + "'");
    return entries_[it->second].second;
  }

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

  // Deep copy of current values (names and shapes preserved).
  std::vector<std::pair<std::string, std::vector<T>>> snapshot() const {
    std::vector<std::pair<std::string, std::vector<T>>> out;
    out.reserve(entries_.size());
    for (const auto& [name, t] : entries_) out.emplace_back(name, t.values());
    return out;
  }

  void restore(const std::vector<std::pair<std::string, std::vector<T>>>& snap) {
    for (const auto& [name, vals] : snap) {
      Tensor<T>& t = get(name);
      if (vals.size() != t.size())
        throw ContractError("param table: snapshot size mismatch for '" + name + "'");
      t.raw_values() = vals;
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
struct AdamState {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::int64_t step = 0;
  // Running beta^t factors, updated multiplicatively so the bias correction
  // is identical on every platform.
  T beta1_pow = T(1);
  T beta2_pow = T(1);
  std::unordered_map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;

  static AdamState with_lr(T lr_) {
    AdamState s;
    s.lr = lr_;
    return s;
  }
};

// One Adam step with bias correction over every parameter in table order.
// Gradients are consumed (cleared) by the step.
template <class T>
void adam_step(ParamTable<T>& params, AdamState<T>& state) {
  for (auto& [name, t] : params)
    if (!t.has_grad())
      throw ContractError("adam_step: parameter '" + name + "' has no gradient");
  state.step += 1;
  state.beta1_pow *= state.beta1;
  state.beta2_pow *= state.beta2;
  const T c1 = T(1) - state.beta1_pow;
  const T c2 = T(1) - state.beta2_pow;
  for (auto& [name, t] : params) {
    auto& [m, v] = state.moments[name];
    if (m.empty()) {
      m.assign(t.size(), T(0));
      v.assign(t.size(), T(0));
    }
    kern::adam_update(t.raw_values().data(), t.grad().data(), m.data(),
                      v.data(), t.size(), state.lr, state.beta1, state.beta2,
                      state.eps, c1, c2);
    t.zero_grad();
  }
}

}  // namespace bundleforge::num
