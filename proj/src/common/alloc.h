// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace stepsep {

// Keeps large tensor buffers in the heap instead of returning them to the
// OS after every op. Idempotent; a no-op outside glibc.
void TuneAllocator();

}  // namespace stepsep
