#include "semlink/tensor.hpp"

#include <unordered_set>

namespace semlink {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_mode_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<int> shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<int> shape, T value, bool requires_grad) {
  for (int d : shape)
    if (d < 0) throw std::invalid_argument("negative dimension");
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl<T>>();
  t.impl_->data.assign(static_cast<std::size_t>(shape_size(shape)), value);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<int> shape, std::vector<T> data, bool requires_grad) {
  if (shape_size(shape) != static_cast<std::int64_t>(data.size()))
    throw std::invalid_argument("data length does not match shape");
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl<T>>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::randn(std::vector<int> shape, RngStream& rng, T stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl_->data) v = static_cast<T>(rng.normal()) * stddev;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::truncated_normal(std::vector<int> shape, RngStream& rng, T stddev,
                                      bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl_->data) v = static_cast<T>(rng.truncated_normal(stddev));
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(std::vector<int> shape, RngStream& rng, T lo, T hi,
                             bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl_->data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
void Tensor<T>::backward() {
  if (!impl_) throw std::runtime_error("backward on undefined tensor");
  if (size() != 1) throw std::invalid_argument("backward requires a scalar output");

  // Iterative post-order DFS; the list ends up topologically sorted with the
  // root last.
  std::vector<detail::TensorImpl<T>*> order;
  std::vector<std::shared_ptr<detail::TensorImpl<T>>> keep_alive;
  std::unordered_set<detail::TensorImpl<T>*> visited;
  struct Frame {
    detail::TensorImpl<T>* node;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  stack.push_back({impl_.get(), 0});
  visited.insert(impl_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_child < f.node->parents.size()) {
      detail::TensorImpl<T>* child = f.node->parents[f.next_child].get();
      keep_alive.push_back(f.node->parents[f.next_child]);
      ++f.next_child;
      if (child->backward_fn && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl<T>* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
      // one-shot graph: free the closure and edges as we retire nodes
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace semlink
