#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mdcsrn/tensor/tensor.hpp"

namespace mdcsrn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

/// Named, ordered parameter collection. Names are unique.
template <typename T>
class ParameterSet {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    index_.emplace(name, items_.size());
    items_.push_back({name, t});
    return t;
  }

  const std::vector<Parameter<T>>& items() const { return items_; }
  std::vector<Parameter<T>>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second].tensor;
  }
  const Tensor<T>& at(const std::string& name) const { return const_cast<ParameterSet*>(this)->at(name); }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }
  void clear_grad() {
    for (auto& p : items_) p.tensor.clear_grad();
  }

 private:
  std::vector<Parameter<T>> items_;
  std::map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;
};

/// Adam with bias correction, one state slot per parameter name.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  const AdamOptions& options() const { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }

  void step(ParameterSet<T>& params) {
    for (auto& p : params.items()) {
      if (!p.tensor.has_grad()) throw ContractViolation("adam: parameter '" + p.name + "' has no gradient");
      auto& st = state_[p.name];
      const std::size_t n = static_cast<std::size_t>(p.tensor.numel());
      if (st.m.empty()) {
        st.m.assign(n, T(0));
        st.v.assign(n, T(0));
      }
      if (st.m.size() != n) throw ShapeError("adam: state for '" + p.name + "' has the wrong size");
      ++st.step;
      const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(st.step));
      const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(st.step));
      const T b1 = static_cast<T>(opt_.beta1), b2 = static_cast<T>(opt_.beta2);
      const Tensor<T> g = p.tensor.grad();
      auto gs = g.data();
      auto w = p.tensor.mutable_data();
      for (std::size_t i = 0; i < n; ++i) {
        st.m[i] = b1 * st.m[i] + (T(1) - b1) * gs[i];
        st.v[i] = b2 * st.v[i] + (T(1) - b2) * gs[i] * gs[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        w[i] = static_cast<T>(w[i] - opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps));
      }
    }
  }

  const std::map<std::string, AdamState<T>>& states() const { return state_; }
  std::map<std::string, AdamState<T>>& states() { return state_; }

 private:
  AdamOptions opt_;
  std::map<std::string, AdamState<T>> state_;
};

}  // namespace mdcsrn
