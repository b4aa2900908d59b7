#include "nmf/parallel.hpp"

#include <omp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace nmf {

void set_thread_count(int n) { omp_set_num_threads(n > 0 ? n : omp_get_num_procs()); }

int thread_count() { return omp_get_max_threads(); }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace nmf
