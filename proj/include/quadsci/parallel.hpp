#pragma once

#include <cstddef>

namespace quadsci {

/// Runs body(i) for i in [0, n). Iterations must write disjoint memory; with
/// that, results are bitwise independent of the thread count.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) if (count > 1)
  for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

void set_thread_count(int threads);  // 0 = runtime default
int thread_count();

/// Applies QUADSCI_THREADS (0 or unset = auto) and returns the thread cap.
int apply_thread_env();

}  // namespace quadsci
