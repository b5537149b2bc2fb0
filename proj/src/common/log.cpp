// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "common/log.h"

#include <atomic>

namespace stepsep {

namespace {
std::atomic<int> g_level{1};
}

int LogLevel() { return g_level.load(); }
void SetLogLevel(int level) { g_level.store(level); }

}  // namespace stepsep
