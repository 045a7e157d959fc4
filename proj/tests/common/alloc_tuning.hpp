#pragma once

#include <malloc.h>

namespace piconv::test {

// Large tape buffers are freed and reallocated every batch; keep them on the
// heap instead of round-tripping through mmap.
inline void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 1 << 28);
}

}  // namespace piconv::test
