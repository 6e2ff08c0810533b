#include "hetsr/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hetsr {

void set_num_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads_from_env() {
  const char* value = std::getenv("HETSR_THREADS");
  if (!value) return;
  try {
    const int threads = std::stoi(value);
    if (threads > 0) set_num_threads(threads);
  } catch (const std::exception&) {
    // Malformed values leave the default in place.
  }
}

}  // namespace hetsr
