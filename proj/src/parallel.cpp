#include "sosync/parallel.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sosync {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void parallel_for(int count, const std::function<void(int)>& fn, bool parallel) {
#ifdef _OPENMP
  if (parallel && count > 1) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#else
  (void)parallel;
#endif
  for (int i = 0; i < count; ++i) fn(i);
}

}  // namespace sosync
