#pragma once

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ovd {

// Execution mode for the data-parallel kernels (per-scene generation, batch
// gradients, inference). The serial path is the reference: both modes run the
// same per-index code and all reductions happen in index order afterwards, so
// results are bitwise identical regardless of mode or thread count.
enum class ExecMode { serial, openmp };

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename Fn>
void parallel_for(int n, ExecMode mode, Fn&& fn) {
#ifdef _OPENMP
  if (mode == ExecMode::openmp) {
    std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
#pragma omp critical
        {
          if (!err) err = std::current_exception();
        }
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#else
  (void)mode;
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace ovd
