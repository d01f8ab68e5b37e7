#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

#include <omp.h>

namespace dyadic {

/// Cap on worker threads. Precedence: explicit call > DYADIC_THREADS > all cores.
inline void set_thread_cap(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

inline void apply_thread_env() {
  if (const char* env = std::getenv("DYADIC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

/// Runs body(i) for i in [0, n). Each index must write only its own slot;
/// callers reduce afterwards in index order so results are thread-count invariant.
/// The first exception raised by any index is rethrown after the loop.
template <class Body>
void parallel_for(long n, Body&& body) {
  if (omp_in_parallel()) {
    for (long i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dyadic
