#include "meshtrace/log.hpp"

#include <cstdlib>

namespace meshtrace {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MESHTRACE_LOG");
    if (!env) return LogLevel::kWarn;
    const std::string v(env);
    if (v == "error") return LogLevel::kError;
    if (v == "warn") return LogLevel::kWarn;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

}  // namespace meshtrace
