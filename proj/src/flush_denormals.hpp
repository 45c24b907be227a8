#pragma once

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace reachlab::detail {

/// Sets flush-to-zero and denormals-are-zero on the calling thread for the
/// guard's lifetime.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#else
  FlushDenormals() = default;
#endif

 public:
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;
};

}  // namespace reachlab::detail
