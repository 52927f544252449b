#include "hypertta/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace hypertta {

namespace {
std::atomic<int> g_thread_override{0};

int env_threads() {
  const char* v = std::getenv("HYPERTTA_THREADS");
  if (v == nullptr) return 0;
  char* end = nullptr;
  long n = std::strtol(v, &end, 10);
  if (end == v || n < 1) return 0;
  return static_cast<int>(n);
}
}  // namespace

int max_threads() {
  int n = g_thread_override.load(std::memory_order_relaxed);
  if (n < 1) n = env_threads();
#if defined(_OPENMP)
  if (n < 1) n = omp_get_max_threads();
#endif
  return n < 1 ? 1 : n;
}

void set_max_threads(int n) { g_thread_override.store(n, std::memory_order_relaxed); }

namespace detail {

void parallel_for_impl(std::int64_t n, void (*trampoline)(void*, std::int64_t), void* ctx) {
  if (n <= 0) return;
  const int threads = max_threads();
#if defined(_OPENMP)
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
      trampoline(ctx, i);
    }
    return;
  }
#else
  (void)threads;
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    trampoline(ctx, i);
  }
}

}  // namespace detail

}  // namespace hypertta
