#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mdcsrn/tensor/error.hpp"

namespace mdcsrn {

using Shape = std::vector<std::int64_t>;
using Index3 = std::array<std::int64_t, 3>;

inline std::int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Recording switch for the autodiff graph. Thread-local; ops called while it
/// is off never build nodes.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

template <typename T>
class Tensor;
template <typename T>
class Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;
  std::shared_ptr<TensorImpl<T>> grad;
};

/// N-D array taking part in a reverse-mode graph. Copies share storage; the
/// elements of a tensor that has been consumed by an op must not be mutated
/// (optimizers update leaf parameters only between graphs).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor empty(Shape shape) {
    for (auto d : shape)
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->data.resize(static_cast<std::size_t>(mdcsrn::numel(shape)));
    impl->shape = std::move(shape);
    return Tensor(std::move(impl));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T value) {
    Tensor t = empty(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }
  static Tensor scalar(T value) { return full(Shape{}, value); }
  static Tensor from(Shape shape, std::vector<T> values) {
    if (static_cast<std::int64_t>(values.size()) != mdcsrn::numel(shape))
      throw ShapeError("element count " + std::to_string(values.size()) + " does not match shape " +
                       to_string(shape));
    Tensor t = empty(std::move(shape));
    t.impl_->data = std::move(values);
    return t;
  }

  /// Detached copy with a different scalar type.
  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>::from(shape(), std::vector<U>(impl_->data.begin(), impl_->data.end()));
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const T> data() const& { return impl_->data; }
  std::span<const T> data() const&& = delete;
  std::span<T> mutable_data() & { return impl_->data; }
  std::span<T> mutable_data() && = delete;
  const std::vector<T>& vec() const& { return impl_->data; }
  std::vector<T> vec() const&& { return impl_->data; }
  T item() const {
    if (impl_->data.size() != 1) throw ContractViolation("item() on tensor with shape " + to_string(shape()));
    return impl_->data[0];
  }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    if (impl_->grad_fn) throw ContractViolation("requires_grad can only be set on leaf tensors");
    impl_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return !impl_->grad_fn; }
  const std::shared_ptr<Node<T>>& grad_fn() const { return impl_->grad_fn; }
  void set_grad_fn(std::shared_ptr<Node<T>> fn) {
    impl_->grad_fn = std::move(fn);
    impl_->requires_grad = true;
  }

  bool has_grad() const { return static_cast<bool>(impl_->grad); }
  /// Accumulated gradient; zeros when the tensor was not reached.
  Tensor grad() const {
    if (!impl_->grad) return zeros(shape());
    return Tensor(impl_->grad);
  }
  void set_grad(const Tensor& g) {
    if (g.shape() != shape()) throw ShapeError("gradient shape mismatch");
    impl_->grad = g.impl_;
  }
  void zero_grad() { impl_->grad = zeros(shape()).impl_; }
  void clear_grad() { impl_->grad.reset(); }

  /// New leaf with a copy of the elements and no history.
  Tensor detach() const { return from(shape(), impl_->data); }

  const TensorImpl<T>* id() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Backward node. apply() receives the gradient of the node's output and
/// returns one gradient per input (undefined where not needed). apply() is
/// written with differentiable ops, so when GradMode is on during backward
/// the returned gradients carry their own history.
template <typename T>
class Node {
 public:
  using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>&, const Node<T>&)>;

  Node(std::string_view name, std::vector<Tensor<T>> inputs, BackwardFn fn, bool higher_order)
      : name_(name), inputs_(std::move(inputs)), fn_(std::move(fn)), higher_order_(higher_order) {}

  std::string_view name() const { return name_; }
  const std::vector<Tensor<T>>& inputs() const { return inputs_; }
  bool needs_grad(std::size_t i) const { return inputs_[i].requires_grad(); }
  bool supports_higher_order() const { return higher_order_; }

  std::vector<Tensor<T>> apply(const Tensor<T>& grad_out) const { return fn_(grad_out, *this); }

 private:
  std::string name_;
  std::vector<Tensor<T>> inputs_;
  BackwardFn fn_;
  bool higher_order_;
};

namespace detail {

template <typename T, typename... Ts>
bool should_record(const Tensor<T>& first, const Ts&... rest) {
  if (!GradMode::enabled()) return false;
  return first.requires_grad() || (rest.requires_grad() || ...);
}

template <typename T>
bool should_record_list(const std::vector<Tensor<T>>& xs) {
  if (!GradMode::enabled()) return false;
  return std::any_of(xs.begin(), xs.end(), [](const Tensor<T>& t) { return t.requires_grad(); });
}

template <typename T>
void attach(Tensor<T>& out, std::string_view name, std::vector<Tensor<T>> inputs,
            typename Node<T>::BackwardFn fn, bool higher_order = true) {
  out.set_grad_fn(std::make_shared<Node<T>>(name, std::move(inputs), std::move(fn), higher_order));
}

template <typename T>
Tensor<T> accumulate(const Tensor<T>& acc, const Tensor<T>& g);

}  // namespace detail

namespace autograd {

namespace detail {

template <typename T>
std::vector<const Node<T>*> topo_order(const Node<T>* root) {
  std::vector<const Node<T>*> order;
  std::unordered_set<const Node<T>*> seen;
  std::vector<std::pair<const Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs().size()) {
      const auto& fn = node->inputs()[next++].grad_fn();
      if (fn && seen.insert(fn.get()).second) stack.emplace_back(fn.get(), 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());  // root first
  return order;
}

template <typename T>
std::unordered_map<const TensorImpl<T>*, Tensor<T>> run(const Tensor<T>& root, const Tensor<T>& seed,
                                                        bool create_graph) {
  std::unordered_map<const TensorImpl<T>*, Tensor<T>> leaf_grads;
  if (!root.grad_fn()) {
    if (root.requires_grad()) leaf_grads.emplace(root.id(), seed);
    return leaf_grads;
  }
  GradModeGuard mode(create_graph);
  std::unordered_map<const Node<T>*, Tensor<T>> node_grads;
  node_grads.emplace(root.grad_fn().get(), seed);
  for (const Node<T>* node : topo_order(root.grad_fn().get())) {
    auto it = node_grads.find(node);
    if (it == node_grads.end()) continue;
    if (create_graph && !node->supports_higher_order())
      throw ContractViolation("op '" + std::string(node->name()) +
                              "' does not support differentiating through its backward pass");
    Tensor<T> g = std::move(it->second);
    node_grads.erase(it);
    std::vector<Tensor<T>> in_grads = node->apply(g);
    const auto& inputs = node->inputs();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad() || !in_grads[i].defined()) continue;
      if (in_grads[i].shape() != inputs[i].shape())
        throw ShapeError("internal: gradient shape " + to_string(in_grads[i].shape()) + " for input " +
                         to_string(inputs[i].shape()) + " of " + std::string(node->name()));
      if (const auto& fn = inputs[i].grad_fn()) {
        auto [slot, fresh] = node_grads.try_emplace(fn.get(), in_grads[i]);
        if (!fresh) slot->second = mdcsrn::detail::accumulate(slot->second, in_grads[i]);
      } else {
        auto [slot, fresh] = leaf_grads.try_emplace(inputs[i].id(), in_grads[i]);
        if (!fresh) slot->second = mdcsrn::detail::accumulate(slot->second, in_grads[i]);
      }
    }
  }
  return leaf_grads;
}

}  // namespace detail

/// Reverse pass from a scalar loss. Gradients are accumulated into the
/// grad buffers of every grad-requiring leaf reached from the loss.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ContractViolation("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  auto grads = detail::run(loss, Tensor<T>::ones(loss.shape()), false);
  for (auto& [impl, g] : grads) {
    // the leaf is alive: it is referenced from the graph rooted at loss
    auto* leaf = const_cast<TensorImpl<T>*>(impl);
    if (leaf->grad) {
      auto& dst = leaf->grad->data;
      const auto& src = g.vec();
      // fresh buffer so previously returned grad() handles stay unchanged
      std::vector<T> sum(dst.size());
      for (std::size_t i = 0; i < dst.size(); ++i) sum[i] = dst[i] + src[i];
      leaf->grad = Tensor<T>::from(leaf->shape, std::move(sum)).impl();
    } else {
      leaf->grad = g.detach().impl();
    }
  }
}

/// Gradients of a scalar output with respect to the given tensors, returned
/// rather than accumulated. With create_graph the results are themselves
/// differentiable (double backward); only ops whose backward is written in
/// differentiable ops allow this.
template <typename T>
std::vector<Tensor<T>> grad(const Tensor<T>& output, const std::vector<Tensor<T>>& inputs, bool create_graph = false) {
  if (output.numel() != 1) throw ContractViolation("grad() needs a scalar output");
  auto grads = detail::run(output, Tensor<T>::ones(output.shape()), create_graph);
  std::vector<Tensor<T>> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) {
    if (!x.is_leaf())
      throw ContractViolation("grad() inputs must be leaf tensors");
    auto it = grads.find(x.id());
    out.push_back(it != grads.end() ? it->second : Tensor<T>::zeros(x.shape()));
  }
  return out;
}

}  // namespace autograd

}  // namespace mdcsrn
