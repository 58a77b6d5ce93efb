#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace meshtrace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Level comes from the MESHTRACE_LOG env var (error|warn|info|debug),
// default warn. Resolved once per process.
LogLevel log_level();

void log_message(LogLevel level, const std::string& msg);

#define MT_LOG(level, expr)                                \
  do {                                                     \
    if (static_cast<int>(level) <=                         \
        static_cast<int>(::meshtrace::log_level())) {      \
      std::ostringstream oss_;                             \
      oss_ << expr;                                        \
      ::meshtrace::log_message(level, oss_.str());         \
    }                                                      \
  } while (0)

#define MT_WARN(expr) MT_LOG(::meshtrace::LogLevel::kWarn, expr)
#define MT_INFO(expr) MT_LOG(::meshtrace::LogLevel::kInfo, expr)
#define MT_DEBUG(expr) MT_LOG(::meshtrace::LogLevel::kDebug, expr)

}  // namespace meshtrace
