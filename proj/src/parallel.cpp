#include "quadsci/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace quadsci {

void set_thread_count(int threads) {
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
}

int thread_count() { return omp_get_max_threads(); }

int apply_thread_env() {
  const char* env = std::getenv("QUADSCI_THREADS");
  int n = 0;
  if (env != nullptr) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      n = 0;
    }
  }
  set_thread_count(n < 0 ? 0 : n);
  return thread_count();
}

}  // namespace quadsci
