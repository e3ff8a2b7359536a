#include "semlink/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace semlink::kernels {

namespace {

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale_f32(std::size_t n, float a, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void add_f32(std::size_t n, const float* a, const float* b, float* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_f32(std::size_t n, const float* a, const float* b, float* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_f32(std::size_t n, const float* a, const float* b, float* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

float dot_f32(std::size_t n, const float* a, const float* b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

double sum_f32(std::size_t n, const float* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  return acc;
}

double sumsq_f32(std::size_t n, const float* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(x[i]);
  return acc;
}

float maxval_f32(std::size_t n, const float* x) {
  float m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void relu_f32(std::size_t n, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

}  // namespace

const TableF32& scalar_table_f32() {
  static const TableF32 table = {axpy_f32, scale_f32, add_f32, sub_f32, mul_f32,
                                 dot_f32,  sum_f32,   sumsq_f32, maxval_f32, relu_f32};
  return table;
}

namespace f64 {

void axpy(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scale(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void add(std::size_t n, const double* a, const double* b, double* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void sub(std::size_t n, const double* a, const double* b, double* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void mul(std::size_t n, const double* a, const double* b, double* o) {
  for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

double dot(std::size_t n, const double* a, const double* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

double sum(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double maxval(std::size_t n, const double* x) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void relu(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace f64

}  // namespace semlink::kernels
