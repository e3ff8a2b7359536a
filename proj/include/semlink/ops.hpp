// Differentiable primitives over Tensor<T>. Shapes are validated up front;
// every op returns a fresh tensor and registers its backward closure when the
// graph is live.
#pragma once

#include <vector>

#include "semlink/tensor.hpp"

namespace semlink {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [M,K]x[K,N]

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);  // 2-d

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c);
template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c);

// x: [..., D] plus a length-D bias broadcast over leading dims.
template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Multiply by a rank-0 tensor (both factors get gradients).
template <typename T>
Tensor<T> mul_scalar_t(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);  // rank-0

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

// Softmax along `axis` (negative counts from the back). Max-subtraction for
// stability; rows of NaN stay NaN.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

// Normalize over the last dim to zero mean / unit variance, then affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);
// Elementwise x^p; callers guarantee x > 0 for non-integral p.
template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape);

// Concatenate along the last dim; all parts share the leading dims.
template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);

// x: [H,W,Cin], kernel: [k,k,Cin,Cout], optional bias [Cout]. Zero padding
// (k-1)/2 so stride 1 preserves and stride 2 halves the spatial dims.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride);

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);  // [H,W,C] -> [2H,2W,C]

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x);  // [H,W,C] -> [H/2,W/2,C], H,W even

// Expand a (2H-1)x(2W-1) relative-position table into the [N,N] bias matrix,
// N = H*W; entry (i,j) depends only on the row/col displacement of i vs j.
template <typename T>
Tensor<T> rel_pos_gather(const Tensor<T>& table, int H, int W);

// Adam with bias correction. Moments are lazily shaped on the first step and
// keyed by parameter order, which must stay stable across steps.
template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
};

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state);

#define SEMLINK_DECLARE_OPS(T)                                                              \
  extern template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                     \
  extern template Tensor<T> transpose(const Tensor<T>&);                                    \
  extern template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                        \
  extern template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                        \
  extern template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                        \
  extern template Tensor<T> scale(const Tensor<T>&, T);                                     \
  extern template Tensor<T> add_const(const Tensor<T>&, T);                                 \
  extern template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);               \
  extern template Tensor<T> mul_scalar_t(const Tensor<T>&, const Tensor<T>&);               \
  extern template Tensor<T> sum_all(const Tensor<T>&);                                      \
  extern template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                   \
  extern template Tensor<T> softmax(const Tensor<T>&, int);                                 \
  extern template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  extern template Tensor<T> relu(const Tensor<T>&);                                         \
  extern template Tensor<T> sigmoid(const Tensor<T>&);                                      \
  extern template Tensor<T> softplus(const Tensor<T>&);                                     \
  extern template Tensor<T> pow_scalar(const Tensor<T>&, T);                                \
  extern template Tensor<T> reshape(const Tensor<T>&, std::vector<int>);                    \
  extern template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                     \
  extern template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int); \
  extern template Tensor<T> upsample_nearest2(const Tensor<T>&);                            \
  extern template Tensor<T> avgpool2(const Tensor<T>&);                                     \
  extern template Tensor<T> rel_pos_gather(const Tensor<T>&, int, int);                     \
  extern template void adam_step(std::vector<Tensor<T>>&, AdamState<T>&);

SEMLINK_DECLARE_OPS(float)
SEMLINK_DECLARE_OPS(double)
#undef SEMLINK_DECLARE_OPS

}  // namespace semlink
