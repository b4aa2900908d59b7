#pragma once

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace nmf {

/// Kernels come in two flavors: the OpenMP version used in production and a
/// plain serial reference kept for testing and benchmarking.
enum class Execution { serial, parallel };

/// Worker count for OpenMP kernels; n <= 0 restores hardware parallelism.
void set_thread_count(int n);
int thread_count();

/// Keeps large scratch matrices on the heap instead of fresh mmap pages.
/// Page faults dominate the small kernels on some virtual machines. No-op
/// outside glibc.
void tune_allocator();

/// Flush-to-zero and denormals-are-zero on the current thread for the guard's
/// lifetime. Network kernels enable it on every thread they run on: denormal
/// floats from decaying gradients slowed training 3-4x, and the mode has to
/// be the same on all workers for results to match across thread counts.
class DenormalsAreZero {
 public:
#if defined(__SSE__)
  DenormalsAreZero() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalsAreZero() { _mm_setcsr(saved_); }
#endif
  DenormalsAreZero(const DenormalsAreZero&) = delete;
  DenormalsAreZero& operator=(const DenormalsAreZero&) = delete;

 private:
#if defined(__SSE__)
  unsigned saved_;
#endif
};

}  // namespace nmf
