// Flat array kernels behind the tensor engine. Scalar reference versions
// always exist; an AVX2 variant of the f32 table is selected at runtime on
// capable CPUs. f64 stays scalar so the oracle/determinism path has a single
// code route on every machine.
#pragma once

#include <cstddef>

namespace semlink::kernels {

enum class Backend { scalar, avx2 };

struct TableF32 {
  // y[i] += a * x[i], fused multiply-add per element in both backends,
  // so scalar and AVX2 results are bit-identical.
  void (*axpy)(std::size_t n, float a, const float* x, float* y);
  void (*scale)(std::size_t n, float a, const float* x, float* y);
  void (*add)(std::size_t n, const float* a, const float* b, float* out);
  void (*sub)(std::size_t n, const float* a, const float* b, float* out);
  void (*mul)(std::size_t n, const float* a, const float* b, float* out);
  // float lane accumulation; backends may differ in the last ulps
  float (*dot)(std::size_t n, const float* a, const float* b);
  // double accumulation in both backends
  double (*sum)(std::size_t n, const float* x);
  double (*sumsq)(std::size_t n, const float* x);
  float (*maxval)(std::size_t n, const float* x);
  void (*relu)(std::size_t n, const float* x, float* y);
};

const TableF32& f32();
Backend active_backend();
bool avx2_available();
// Force a backend (tests compare scalar vs avx2 outputs). Throws if the
// requested backend is not available on this machine.
void force_backend(Backend b);
void reset_backend();  // back to auto-detection

const TableF32& scalar_table_f32();

namespace f64 {
void axpy(std::size_t n, double a, const double* x, double* y);
void scale(std::size_t n, double a, const double* x, double* y);
void add(std::size_t n, const double* a, const double* b, double* out);
void sub(std::size_t n, const double* a, const double* b, double* out);
void mul(std::size_t n, const double* a, const double* b, double* out);
double dot(std::size_t n, const double* a, const double* b);
double sum(std::size_t n, const double* x);
double sumsq(std::size_t n, const double* x);
double maxval(std::size_t n, const double* x);
void relu(std::size_t n, const double* x, double* y);
}  // namespace f64

// Typed access used by the templated tensor ops.
template <typename T>
struct Kern;

template <>
struct Kern<float> {
  static void axpy(std::size_t n, float a, const float* x, float* y) { f32().axpy(n, a, x, y); }
  static void scale(std::size_t n, float a, const float* x, float* y) { f32().scale(n, a, x, y); }
  static void add(std::size_t n, const float* a, const float* b, float* o) { f32().add(n, a, b, o); }
  static void sub(std::size_t n, const float* a, const float* b, float* o) { f32().sub(n, a, b, o); }
  static void mul(std::size_t n, const float* a, const float* b, float* o) { f32().mul(n, a, b, o); }
  static float dot(std::size_t n, const float* a, const float* b) { return f32().dot(n, a, b); }
  static double sum(std::size_t n, const float* x) { return f32().sum(n, x); }
  static double sumsq(std::size_t n, const float* x) { return f32().sumsq(n, x); }
  static float maxval(std::size_t n, const float* x) { return f32().maxval(n, x); }
  static void relu(std::size_t n, const float* x, float* y) { f32().relu(n, x, y); }
};

template <>
struct Kern<double> {
  static void axpy(std::size_t n, double a, const double* x, double* y) { f64::axpy(n, a, x, y); }
  static void scale(std::size_t n, double a, const double* x, double* y) { f64::scale(n, a, x, y); }
  static void add(std::size_t n, const double* a, const double* b, double* o) { f64::add(n, a, b, o); }
  static void sub(std::size_t n, const double* a, const double* b, double* o) { f64::sub(n, a, b, o); }
  static void mul(std::size_t n, const double* a, const double* b, double* o) { f64::mul(n, a, b, o); }
  static double dot(std::size_t n, const double* a, const double* b) { return f64::dot(n, a, b); }
  static double sum(std::size_t n, const double* x) { return f64::sum(n, x); }
  static double sumsq(std::size_t n, const double* x) { return f64::sumsq(n, x); }
  static double maxval(std::size_t n, const double* x) { return f64::maxval(n, x); }
  static void relu(std::size_t n, const double* x, double* y) { f64::relu(n, x, y); }
};

}  // namespace semlink::kernels
