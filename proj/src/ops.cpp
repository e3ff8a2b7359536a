#include "semlink/ops.hpp"

#include <cmath>
#include <cstring>

#include "semlink/kernels.hpp"

namespace semlink {

namespace {

template <typename T>
using Impl = detail::TensorImpl<T>;

template <typename T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <typename T>
void check_defined(const Tensor<T>& t, const char* what) {
  if (!t.defined()) throw std::invalid_argument(std::string(what) + ": undefined tensor");
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: expects 2-d tensors");
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K) throw std::invalid_argument("matmul: inner dimensions do not match");

  std::vector<T> out(static_cast<std::size_t>(M) * N, T(0));
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  for (int i = 0; i < M; ++i)
    for (int k = 0; k < K; ++k)
      kernels::Kern<T>::axpy(static_cast<std::size_t>(N), pa[i * K + k], pb + k * N,
                             out.data() + static_cast<std::size_t>(i) * N);

  ImplPtr<T> ia = a.impl_, ib = b.impl_;
  return detail::make_node<T>(
      {M, N}, std::move(out), {a, b}, [ia, ib, M, K, N](Impl<T>& self) {
        const T* dy = self.grad.data();
        if (ia->requires_grad) {
          ia->ensure_grad();
          const T* pb = ib->data.data();
          T* da = ia->grad.data();
          for (int i = 0; i < M; ++i)
            for (int k = 0; k < K; ++k)
              da[i * K + k] += kernels::Kern<T>::dot(static_cast<std::size_t>(N),
                                                     dy + static_cast<std::size_t>(i) * N,
                                                     pb + static_cast<std::size_t>(k) * N);
        }
        if (ib->requires_grad) {
          ib->ensure_grad();
          const T* pa = ia->data.data();
          T* db = ib->grad.data();
          for (int i = 0; i < M; ++i)
            for (int k = 0; k < K; ++k)
              kernels::Kern<T>::axpy(static_cast<std::size_t>(N), pa[i * K + k],
                                     dy + static_cast<std::size_t>(i) * N,
                                     db + static_cast<std::size_t>(k) * N);
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  check_defined(a, "transpose");
  if (a.rank() != 2) throw std::invalid_argument("transpose: expects a 2-d tensor");
  const int M = a.dim(0), N = a.dim(1);
  std::vector<T> out(static_cast<std::size_t>(M) * N);
  const T* pa = a.data().data();
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) out[static_cast<std::size_t>(j) * M + i] = pa[i * N + j];
  ImplPtr<T> ia = a.impl_;
  return detail::make_node<T>({N, M}, std::move(out), {a}, [ia, M, N](Impl<T>& self) {
    if (!ia->requires_grad) return;
    ia->ensure_grad();
    const T* dy = self.grad.data();
    T* da = ia->grad.data();
    for (int j = 0; j < N; ++j)
      for (int i = 0; i < M; ++i) da[i * N + j] += dy[static_cast<std::size_t>(j) * M + i];
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "add");
  check_defined(b, "add");
  check_same_shape(a, b, "add");
  std::vector<T> out(a.data().size());
  kernels::Kern<T>::add(out.size(), a.data().data(), b.data().data(), out.data());
  ImplPtr<T> ia = a.impl_, ib = b.impl_;
  return detail::make_node<T>(a.shape(), std::move(out), {a, b}, [ia, ib](Impl<T>& self) {
    for (const auto& p : {ia, ib}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      kernels::Kern<T>::axpy(self.grad.size(), T(1), self.grad.data(), p->grad.data());
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "sub");
  check_defined(b, "sub");
  check_same_shape(a, b, "sub");
  std::vector<T> out(a.data().size());
  kernels::Kern<T>::sub(out.size(), a.data().data(), b.data().data(), out.data());
  ImplPtr<T> ia = a.impl_, ib = b.impl_;
  return detail::make_node<T>(a.shape(), std::move(out), {a, b}, [ia, ib](Impl<T>& self) {
    if (ia->requires_grad) {
      ia->ensure_grad();
      kernels::Kern<T>::axpy(self.grad.size(), T(1), self.grad.data(), ia->grad.data());
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      kernels::Kern<T>::axpy(self.grad.size(), T(-1), self.grad.data(), ib->grad.data());
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_defined(a, "mul");
  check_defined(b, "mul");
  check_same_shape(a, b, "mul");
  std::vector<T> out(a.data().size());
  kernels::Kern<T>::mul(out.size(), a.data().data(), b.data().data(), out.data());
  ImplPtr<T> ia = a.impl_, ib = b.impl_;
  return detail::make_node<T>(a.shape(), std::move(out), {a, b}, [ia, ib](Impl<T>& self) {
    const std::size_t n = self.grad.size();
    if (ia->requires_grad) {
      ia->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ia->grad[i] += self.grad[i] * ib->data[i];
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ib->grad[i] += self.grad[i] * ia->data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  check_defined(a, "scale");
  std::vector<T> out(a.data().size());
  kernels::Kern<T>::scale(out.size(), c, a.data().data(), out.data());
  ImplPtr<T> ia = a.impl_;
  return detail::make_node<T>(a.shape(), std::move(out), {a}, [ia, c](Impl<T>& self) {
    if (!ia->requires_grad) return;
    ia->ensure_grad();
    kernels::Kern<T>::axpy(self.grad.size(), c, self.grad.data(), ia->grad.data());
  });
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  check_defined(a, "add_const");
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += c;
  ImplPtr<T> ia = a.impl_;
  return detail::make_node<T>(a.shape(), std::move(out), {a}, [ia](Impl<T>& self) {
    if (!ia->requires_grad) return;
    ia->ensure_grad();
    kernels::Kern<T>::axpy(self.grad.size(), T(1), self.grad.data(), ia->grad.data());
  });
}

template <typename T>
Tensor<T> add_row_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  check_defined(x, "add_row_bias");
  check_defined(bias, "add_row_bias");
  if (x.rank() < 1 || bias.rank() != 1 || x.shape().back() != bias.dim(0))
    throw std::invalid_argument("add_row_bias: bias length must equal the last dim of x");
  const std::size_t D = static_cast<std::size_t>(bias.dim(0));
  const std::size_t rows = x.data().size() / D;
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  const T* pb = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    kernels::Kern<T>::add(D, px + r * D, pb, out.data() + r * D);
  ImplPtr<T> ix = x.impl_, ib = bias.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x, bias}, [ix, ib, D, rows](Impl<T>& self) {
    if (ix->requires_grad) {
      ix->ensure_grad();
      kernels::Kern<T>::axpy(self.grad.size(), T(1), self.grad.data(), ix->grad.data());
    }
    if (ib->requires_grad) {
      ib->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        kernels::Kern<T>::axpy(D, T(1), self.grad.data() + r * D, ib->grad.data());
    }
  });
}

template <typename T>
Tensor<T> mul_scalar_t(const Tensor<T>& x, const Tensor<T>& s) {
  check_defined(x, "mul_scalar_t");
  check_defined(s, "mul_scalar_t");
  if (s.size() != 1) throw std::invalid_argument("mul_scalar_t: s must be a scalar tensor");
  const T c = s.data()[0];
  std::vector<T> out(x.data().size());
  kernels::Kern<T>::scale(out.size(), c, x.data().data(), out.data());
  ImplPtr<T> ix = x.impl_, is = s.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x, s}, [ix, is, c](Impl<T>& self) {
    if (ix->requires_grad) {
      ix->ensure_grad();
      kernels::Kern<T>::axpy(self.grad.size(), c, self.grad.data(), ix->grad.data());
    }
    if (is->requires_grad) {
      is->ensure_grad();
      is->grad[0] += kernels::Kern<T>::dot(self.grad.size(), self.grad.data(), ix->data.data());
    }
  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  check_defined(x, "sum_all");
  const T total = static_cast<T>(kernels::Kern<T>::sum(x.data().size(), x.data().data()));
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>({}, {total}, {x}, [ix](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const T g = self.grad[0];
    for (auto& v : ix->grad) v += g;
  });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  check_defined(pred, "mse_loss");
  check_defined(target, "mse_loss");
  check_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.data().size();
  const T* pp = pred.data().data();
  const T* pt = target.data().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pp[i]) - static_cast<double>(pt[i]);
    acc += d * d;
  }
  const T loss = static_cast<T>(acc / static_cast<double>(n));
  ImplPtr<T> ip = pred.impl_, it = target.impl_;
  return detail::make_node<T>({}, {loss}, {pred, target}, [ip, it, n](Impl<T>& self) {
    const T g = self.grad[0];
    const T c = g * T(2) / static_cast<T>(n);
    if (ip->requires_grad) {
      ip->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) ip->grad[i] += c * (ip->data[i] - it->data[i]);
    }
    if (it->requires_grad) {
      it->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) it->grad[i] -= c * (ip->data[i] - it->data[i]);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  check_defined(x, "softmax");
  if (x.rank() < 1) throw std::invalid_argument("softmax: rank-0 input");
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");

  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
  for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  const std::size_t n = static_cast<std::size_t>(x.dim(axis));

  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const T* row = px + o * n;
      T* orow = out.data() + o * n;
      const T m = kernels::Kern<T>::maxval(n, row);
      for (std::size_t i = 0; i < n; ++i) orow[i] = std::exp(row[i] - m);
      const T s = static_cast<T>(kernels::Kern<T>::sum(n, orow));
      kernels::Kern<T>::scale(n, T(1) / s, orow, orow);
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t base = o * n * inner + j;
        T m = px[base];
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, px[base + i * inner]);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const T e = std::exp(px[base + i * inner] - m);
          out[base + i * inner] = e;
          s += static_cast<double>(e);
        }
        const T invs = static_cast<T>(1.0 / s);
        for (std::size_t i = 0; i < n; ++i) out[base + i * inner] *= invs;
      }
    }
  }

  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x},
                              [ix, outer, inner, n](Impl<T>& self) {
                                if (!ix->requires_grad) return;
                                ix->ensure_grad();
                                const T* y = self.data.data();
                                const T* dy = self.grad.data();
                                T* dx = ix->grad.data();
                                for (std::size_t o = 0; o < outer; ++o) {
                                  for (std::size_t j = 0; j < inner; ++j) {
                                    const std::size_t base = o * n * inner + j;
                                    double dot = 0.0;
                                    for (std::size_t i = 0; i < n; ++i) {
                                      const std::size_t k = base + i * inner;
                                      dot += static_cast<double>(dy[k]) * static_cast<double>(y[k]);
                                    }
                                    for (std::size_t i = 0; i < n; ++i) {
                                      const std::size_t k = base + i * inner;
                                      dx[k] += y[k] * (dy[k] - static_cast<T>(dot));
                                    }
                                  }
                                }
                              });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  check_defined(x, "layer_norm");
  check_defined(gain, "layer_norm");
  check_defined(bias, "layer_norm");
  if (x.rank() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
  const int C = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != C || bias.rank() != 1 || bias.dim(0) != C)
    throw std::invalid_argument("layer_norm: gain/bias must have length C");

  const std::size_t Cs = static_cast<std::size_t>(C);
  const std::size_t P = x.data().size() / Cs;
  auto xhat = std::make_shared<std::vector<T>>(x.data().size());
  auto invstd = std::make_shared<std::vector<T>>(P);
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  const T* pg = gain.data().data();
  const T* pb = bias.data().data();
  for (std::size_t p = 0; p < P; ++p) {
    const T* row = px + p * Cs;
    const double mu = kernels::Kern<T>::sum(Cs, row) / static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < Cs; ++c) {
      const double d = static_cast<double>(row[c]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*invstd)[p] = is;
    for (std::size_t c = 0; c < Cs; ++c) {
      const T xh = (row[c] - static_cast<T>(mu)) * is;
      (*xhat)[p * Cs + c] = xh;
      out[p * Cs + c] = pg[c] * xh + pb[c];
    }
  }

  ImplPtr<T> ix = x.impl_, ig = gain.impl_, ib = bias.impl_;
  return detail::make_node<T>(
      x.shape(), std::move(out), {x, gain, bias}, [ix, ig, ib, xhat, invstd, P, Cs](Impl<T>& self) {
        const T* dy = self.grad.data();
        const T* pg = ig->data.data();
        if (ix->requires_grad) {
          ix->ensure_grad();
          T* dx = ix->grad.data();
          for (std::size_t p = 0; p < P; ++p) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < Cs; ++c) {
              const double dxh = static_cast<double>(dy[p * Cs + c]) * static_cast<double>(pg[c]);
              s1 += dxh;
              s2 += dxh * static_cast<double>((*xhat)[p * Cs + c]);
            }
            const double inv_c = 1.0 / static_cast<double>(Cs);
            for (std::size_t c = 0; c < Cs; ++c) {
              const double dxh = static_cast<double>(dy[p * Cs + c]) * static_cast<double>(pg[c]);
              const double xh = static_cast<double>((*xhat)[p * Cs + c]);
              dx[p * Cs + c] += static_cast<T>(static_cast<double>((*invstd)[p]) *
                                               (dxh - s1 * inv_c - xh * s2 * inv_c));
            }
          }
        }
        if (ig->requires_grad) {
          ig->ensure_grad();
          for (std::size_t p = 0; p < P; ++p)
            for (std::size_t c = 0; c < Cs; ++c)
              ig->grad[c] += dy[p * Cs + c] * (*xhat)[p * Cs + c];
        }
        if (ib->requires_grad) {
          ib->ensure_grad();
          for (std::size_t p = 0; p < P; ++p)
            kernels::Kern<T>::axpy(Cs, T(1), dy + p * Cs, ib->grad.data());
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  check_defined(x, "relu");
  std::vector<T> out(x.data().size());
  kernels::Kern<T>::relu(out.size(), x.data().data(), out.data());
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x}, [ix](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (ix->data[i] > T(0)) ix->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  check_defined(x, "sigmoid");
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = px[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x}, [ix](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.data[i];
      ix->grad[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  check_defined(x, "softplus");
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = px[i];
    out[i] = std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  }
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x}, [ix](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = ix->data[i];
      const T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      ix->grad[i] += self.grad[i] * s;
    }
  });
}

template <typename T>
Tensor<T> pow_scalar(const Tensor<T>& x, T p) {
  check_defined(x, "pow_scalar");
  std::vector<T> out(x.data().size());
  const T* px = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(px[i], p);
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(x.shape(), std::move(out), {x}, [ix, p](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = ix->data[i];
      if (v == T(0)) continue;
      ix->grad[i] += self.grad[i] * p * self.data[i] / v;
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
  check_defined(x, "reshape");
  if (shape_size(new_shape) != x.size())
    throw std::invalid_argument("reshape: element count must be preserved");
  std::vector<T> out(x.data().begin(), x.data().end());
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>(std::move(new_shape), std::move(out), {x}, [ix](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    kernels::Kern<T>::axpy(self.grad.size(), T(1), self.grad.data(), ix->grad.data());
  });
}

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: no parts");
  for (const auto& p : parts) check_defined(p, "concat_last");
  const auto& first = parts.front().shape();
  if (first.empty()) throw std::invalid_argument("concat_last: rank-0 part");
  std::size_t outer = 1;
  for (std::size_t i = 0; i + 1 < first.size(); ++i) outer *= static_cast<std::size_t>(first[i]);
  int total_last = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size() ||
        !std::equal(s.begin(), s.end() - 1, first.begin(), first.end() - 1))
      throw std::invalid_argument("concat_last: leading dims differ");
    widths.push_back(static_cast<std::size_t>(s.back()));
    total_last += s.back();
  }
  std::vector<int> out_shape = first;
  out_shape.back() = total_last;
  std::vector<T> out(outer * static_cast<std::size_t>(total_last));
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].data().data();
    for (std::size_t r = 0; r < outer; ++r)
      std::memcpy(out.data() + r * total_last + off, src + r * widths[k], widths[k] * sizeof(T));
    off += widths[k];
  }

  std::vector<ImplPtr<T>> impls;
  for (const auto& p : parts) impls.push_back(p.impl_);
  return detail::make_node<T>(std::move(out_shape), std::move(out), parts,
                              [impls, widths, outer, total_last](Impl<T>& self) {
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < impls.size(); ++k) {
                                  if (impls[k]->requires_grad) {
                                    impls[k]->ensure_grad();
                                    for (std::size_t r = 0; r < outer; ++r)
                                      kernels::Kern<T>::axpy(
                                          widths[k], T(1),
                                          self.grad.data() + r * total_last + off,
                                          impls[k]->grad.data() + r * widths[k]);
                                  }
                                  off += widths[k];
                                }
                              });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, int stride) {
  check_defined(x, "conv2d");
  check_defined(kernel, "conv2d");
  if (x.rank() != 3 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d: expects x[H,W,Cin], kernel[k,k,Cin,Cout]");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
  const int H = x.dim(0), W = x.dim(1), Cin = x.dim(2);
  const int k = kernel.dim(0);
  if (kernel.dim(1) != k || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd square");
  if (kernel.dim(2) != Cin) throw std::invalid_argument("conv2d: channel mismatch");
  const int Cout = kernel.dim(3);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout))
    throw std::invalid_argument("conv2d: bias must have length Cout");
  const int pad = (k - 1) / 2;
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;

  std::vector<T> out(static_cast<std::size_t>(Ho) * Wo * Cout, T(0));
  const T* px = x.data().data();
  const T* pk = kernel.data().data();
  const std::size_t co_n = static_cast<std::size_t>(Cout);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      T* orow = out.data() + (static_cast<std::size_t>(oy) * Wo + ox) * co_n;
      for (int a = 0; a < k; ++a) {
        const int iy = oy * stride + a - pad;
        if (iy < 0 || iy >= H) continue;
        for (int b = 0; b < k; ++b) {
          const int ix = ox * stride + b - pad;
          if (ix < 0 || ix >= W) continue;
          const T* xrow = px + (static_cast<std::size_t>(iy) * W + ix) * Cin;
          const T* krow = pk + (static_cast<std::size_t>(a) * k + b) * Cin * co_n;
          for (int ci = 0; ci < Cin; ++ci)
            kernels::Kern<T>::axpy(co_n, xrow[ci], krow + static_cast<std::size_t>(ci) * co_n, orow);
        }
      }
      if (bias.defined()) kernels::Kern<T>::axpy(co_n, T(1), bias.data().data(), orow);
    }
  }

  ImplPtr<T> ix = x.impl_, ik = kernel.impl_;
  ImplPtr<T> ib = bias.defined() ? bias.impl_ : nullptr;
  std::vector<Tensor<T>> inputs = {x, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_node<T>(
      {Ho, Wo, Cout}, std::move(out), std::move(inputs),
      [ix, ik, ib, H, W, Cin, k, Cout, pad, stride, Ho, Wo](Impl<T>& self) {
        const T* dy = self.grad.data();
        const std::size_t co_n = static_cast<std::size_t>(Cout);
        const bool need_dx = ix->requires_grad;
        const bool need_dk = ik->requires_grad;
        if (need_dx) ix->ensure_grad();
        if (need_dk) ik->ensure_grad();
        if (need_dx || need_dk) {
          const T* px = ix->data.data();
          const T* pk = ik->data.data();
          T* dxp = need_dx ? ix->grad.data() : nullptr;
          T* dkp = need_dk ? ik->grad.data() : nullptr;
          for (int oy = 0; oy < Ho; ++oy) {
            for (int ox = 0; ox < Wo; ++ox) {
              const T* drow = dy + (static_cast<std::size_t>(oy) * Wo + ox) * co_n;
              for (int a = 0; a < k; ++a) {
                const int iy = oy * stride + a - pad;
                if (iy < 0 || iy >= H) continue;
                for (int b = 0; b < k; ++b) {
                  const int ix2 = ox * stride + b - pad;
                  if (ix2 < 0 || ix2 >= W) continue;
                  const std::size_t xoff = (static_cast<std::size_t>(iy) * W + ix2) * Cin;
                  const std::size_t koff = (static_cast<std::size_t>(a) * k + b) * Cin * co_n;
                  for (int ci = 0; ci < Cin; ++ci) {
                    if (need_dx)
                      dxp[xoff + ci] += kernels::Kern<T>::dot(
                          co_n, drow, pk + koff + static_cast<std::size_t>(ci) * co_n);
                    if (need_dk)
                      kernels::Kern<T>::axpy(co_n, px[xoff + ci], drow,
                                             dkp + koff + static_cast<std::size_t>(ci) * co_n);
                  }
                }
              }
            }
          }
        }
        if (ib && ib->requires_grad) {
          ib->ensure_grad();
          const std::size_t positions = static_cast<std::size_t>(Ho) * Wo;
          for (std::size_t p = 0; p < positions; ++p)
            kernels::Kern<T>::axpy(co_n, T(1), dy + p * co_n, ib->grad.data());
        }
      });
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
  check_defined(x, "upsample_nearest2");
  if (x.rank() != 3) throw std::invalid_argument("upsample_nearest2: expects [H,W,C]");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  std::vector<T> out(static_cast<std::size_t>(2 * H) * (2 * W) * C);
  const T* px = x.data().data();
  const std::size_t Cs = static_cast<std::size_t>(C);
  for (int y = 0; y < 2 * H; ++y)
    for (int xx = 0; xx < 2 * W; ++xx)
      std::memcpy(out.data() + (static_cast<std::size_t>(y) * 2 * W + xx) * Cs,
                  px + (static_cast<std::size_t>(y / 2) * W + xx / 2) * Cs, Cs * sizeof(T));
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>({2 * H, 2 * W, C}, std::move(out), {x}, [ix, H, W, C](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const std::size_t Cs = static_cast<std::size_t>(C);
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx)
        kernels::Kern<T>::axpy(Cs, T(1),
                               self.grad.data() + (static_cast<std::size_t>(y) * 2 * W + xx) * Cs,
                               ix->grad.data() + (static_cast<std::size_t>(y / 2) * W + xx / 2) * Cs);
  });
}

template <typename T>
Tensor<T> avgpool2(const Tensor<T>& x) {
  check_defined(x, "avgpool2");
  if (x.rank() != 3) throw std::invalid_argument("avgpool2: expects [H,W,C]");
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  if (H % 2 != 0 || W % 2 != 0) throw std::invalid_argument("avgpool2: H and W must be even");
  const int Ho = H / 2, Wo = W / 2;
  const std::size_t Cs = static_cast<std::size_t>(C);
  std::vector<T> out(static_cast<std::size_t>(Ho) * Wo * C, T(0));
  const T* px = x.data().data();
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx)
      kernels::Kern<T>::axpy(Cs, T(0.25),
                             px + (static_cast<std::size_t>(y) * W + xx) * Cs,
                             out.data() + (static_cast<std::size_t>(y / 2) * Wo + xx / 2) * Cs);
  ImplPtr<T> ix = x.impl_;
  return detail::make_node<T>({Ho, Wo, C}, std::move(out), {x}, [ix, H, W, C, Wo](Impl<T>& self) {
    if (!ix->requires_grad) return;
    ix->ensure_grad();
    const std::size_t Cs = static_cast<std::size_t>(C);
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx)
        kernels::Kern<T>::axpy(Cs, T(0.25),
                               self.grad.data() + (static_cast<std::size_t>(y / 2) * Wo + xx / 2) * Cs,
                               ix->grad.data() + (static_cast<std::size_t>(y) * W + xx) * Cs);
  });
}

template <typename T>
Tensor<T> rel_pos_gather(const Tensor<T>& table, int H, int W) {
  check_defined(table, "rel_pos_gather");
  if (table.rank() != 2 || table.dim(0) != 2 * H - 1 || table.dim(1) != 2 * W - 1)
    throw std::invalid_argument("rel_pos_gather: table must be (2H-1)x(2W-1)");
  const int N = H * W;
  const int TW = 2 * W - 1;
  std::vector<T> out(static_cast<std::size_t>(N) * N);
  const T* pt = table.data().data();
  for (int i = 0; i < N; ++i) {
    const int ri = i / W, ci = i % W;
    for (int j = 0; j < N; ++j) {
      const int rj = j / W, cj = j % W;
      out[static_cast<std::size_t>(i) * N + j] =
          pt[static_cast<std::size_t>(ri - rj + H - 1) * TW + (ci - cj + W - 1)];
    }
  }
  ImplPtr<T> it = table.impl_;
  return detail::make_node<T>({N, N}, std::move(out), {table}, [it, H, W, N, TW](Impl<T>& self) {
    if (!it->requires_grad) return;
    it->ensure_grad();
    const T* dy = self.grad.data();
    for (int i = 0; i < N; ++i) {
      const int ri = i / W, ci = i % W;
      for (int j = 0; j < N; ++j) {
        const int rj = j / W, cj = j % W;
        it->grad[static_cast<std::size_t>(ri - rj + H - 1) * TW + (ci - cj + W - 1)] +=
            dy[static_cast<std::size_t>(i) * N + j];
      }
    }
  });
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first_moment[i].assign(params[i].data().size(), T(0));
      state.second_moment[i].assign(params[i].data().size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: state does not match parameter list");

  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (state.first_moment[i].size() != p.data().size())
      throw std::invalid_argument("adam_step: parameter shape changed");
    auto data = p.data();
    const auto g = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = state.lr * (mj / bc1) / (std::sqrt(vj / bc2) + state.epsilon);
      data[j] = static_cast<T>(static_cast<double>(data[j]) - update);
    }
  }
}

#define SEMLINK_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose(const Tensor<T>&);                                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                                            \
  template Tensor<T> add_const(const Tensor<T>&, T);                                        \
  template Tensor<T> add_row_bias(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> mul_scalar_t(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sum_all(const Tensor<T>&);                                             \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax(const Tensor<T>&, int);                                        \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);   \
  template Tensor<T> relu(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                             \
  template Tensor<T> softplus(const Tensor<T>&);                                            \
  template Tensor<T> pow_scalar(const Tensor<T>&, T);                                       \
  template Tensor<T> reshape(const Tensor<T>&, std::vector<int>);                           \
  template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);     \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                                   \
  template Tensor<T> avgpool2(const Tensor<T>&);                                            \
  template Tensor<T> rel_pos_gather(const Tensor<T>&, int, int);                            \
  template void adam_step(std::vector<Tensor<T>>&, AdamState<T>&);

SEMLINK_INSTANTIATE_OPS(float)
SEMLINK_INSTANTIATE_OPS(double)
#undef SEMLINK_INSTANTIATE_OPS

}  // namespace semlink
