#pragma once

#include <cstdint>

namespace hypertta {

// Thread count used by the OpenMP kernels. Resolution order:
// set_max_threads() override, then the HYPERTTA_THREADS environment
// variable, then omp_get_max_threads(). Always >= 1.
int max_threads();

// Override the thread cap for this process (0 restores env/OMP defaults).
void set_max_threads(int n);

// Static-schedule parallel loop over [0, n). Every kernel built on this
// computes each output element with a fixed serial reduction order, so
// results are bitwise identical for any thread count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn);

namespace detail {
void parallel_for_impl(std::int64_t n, void (*trampoline)(void*, std::int64_t), void* ctx);
}

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  auto trampoline = [](void* ctx, std::int64_t i) { (*static_cast<Fn*>(ctx))(i); };
  detail::parallel_for_impl(n, trampoline, &fn);
}

}  // namespace hypertta
