// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "common/alloc.h"

#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stepsep {

void TuneAllocator() {
  static std::once_flag once;
  std::call_once(once, [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
  });
}

}  // namespace stepsep
