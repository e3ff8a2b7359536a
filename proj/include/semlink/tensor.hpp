// Reverse-mode differentiable tensors. Row-major N-d arrays with an optional
// gradient accumulator; ops record closures on a DAG that backward() walks in
// reverse topological order. One graph is confined to one thread.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semlink/rng.hpp"

namespace semlink {

namespace detail {

template <typename T>
struct TensorImpl {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Thread-local switch; evaluation paths that never call backward() run with
// the graph disabled to skip closure bookkeeping.
bool grad_mode_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, T value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, RngStream& rng, T stddev, bool requires_grad = false);
  static Tensor truncated_normal(std::vector<int> shape, RngStream& rng, T stddev,
                                 bool requires_grad = false);
  static Tensor uniform(std::vector<int> shape, RngStream& rng, T lo, T hi,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  // Gradient values; empty span until something accumulated into it.
  std::span<const T> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  T item() const {
    if (size() != 1) throw std::invalid_argument("item() requires a single-element tensor");
    return impl_->data[0];
  }

  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }

  // Reverse-mode pass from a scalar output. Releases the graph as it goes.
  void backward();

  // Value copy detached from any graph.
  Tensor detach() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl<T>>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  std::shared_ptr<detail::TensorImpl<T>> impl_;
};

namespace detail {

// Shared factory for op outputs: attaches the backward closure only when the
// graph is live and some input needs gradients.
template <typename T>
Tensor<T> make_node(std::vector<int> shape, std::vector<T> data,
                    std::vector<Tensor<T>> inputs,
                    std::function<void(TensorImpl<T>&)> backward_fn) {
  Tensor<T> out;
  out.impl_ = std::make_shared<TensorImpl<T>>();
  out.impl_->shape = std::move(shape);
  out.impl_->data = std::move(data);
  bool need = false;
  if (grad_mode_enabled()) {
    for (const auto& in : inputs) need = need || in.impl_->requires_grad;
  }
  if (need) {
    out.impl_->requires_grad = true;
    out.impl_->parents.reserve(inputs.size());
    for (auto& in : inputs) out.impl_->parents.push_back(in.impl_);
    out.impl_->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace semlink
