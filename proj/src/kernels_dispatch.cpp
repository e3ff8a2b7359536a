#include "semlink/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace semlink::kernels {

#if SEMLINK_HAVE_AVX2
const TableF32& avx2_table_f32();
#endif

namespace {

bool detect_avx2() {
#if SEMLINK_HAVE_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<const TableF32*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

void select_auto() {
  if (detect_avx2()) {
#if SEMLINK_HAVE_AVX2
    g_active.store(&avx2_table_f32());
    g_backend.store(Backend::avx2);
    return;
#endif
  }
  g_active.store(&scalar_table_f32());
  g_backend.store(Backend::scalar);
}

}  // namespace

const TableF32& f32() {
  const TableF32* t = g_active.load(std::memory_order_relaxed);
  if (t == nullptr) {
    select_auto();
    t = g_active.load();
  }
  return *t;
}

Backend active_backend() {
  f32();
  return g_backend.load();
}

bool avx2_available() { return detect_avx2(); }

void force_backend(Backend b) {
  if (b == Backend::avx2) {
#if SEMLINK_HAVE_AVX2
    if (!detect_avx2()) throw std::runtime_error("avx2 backend not available on this cpu");
    g_active.store(&avx2_table_f32());
    g_backend.store(Backend::avx2);
    return;
#else
    throw std::runtime_error("avx2 backend not compiled in");
#endif
  }
  g_active.store(&scalar_table_f32());
  g_backend.store(Backend::scalar);
}

void reset_backend() { select_auto(); }

}  // namespace semlink::kernels
