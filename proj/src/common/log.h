// Copyright 2026 The stepsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iostream>
#include <sstream>

namespace stepsep {

// Verbosity: 0 = warnings only, 1 = info (default), 2 = debug.
int LogLevel();
void SetLogLevel(int level);

class LogLine {
 public:
  LogLine(const char* tag, bool enabled) : enabled_(enabled) {
    if (enabled_) os_ << '[' << tag << "] ";
  }
  ~LogLine() {
    if (enabled_) std::clog << os_.str() << std::endl;
  }
  template <typename V>
  LogLine& operator<<(const V& v) {
    if (enabled_) os_ << v;
    return *this;
  }

 private:
  bool enabled_;
  std::ostringstream os_;
};

}  // namespace stepsep

#define SS_LOG_INFO ::stepsep::LogLine("info", ::stepsep::LogLevel() >= 1)
#define SS_LOG_WARN ::stepsep::LogLine("warn", true)
#define SS_LOG_DEBUG ::stepsep::LogLine("debug", ::stepsep::LogLevel() >= 2)
