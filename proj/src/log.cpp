#include "tailspin/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace tailspin {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("TAILSPIN_LOG");
    if (env == nullptr) return LogLevel::info;
    const std::string v = env;
    if (v == "error") return LogLevel::error;
    if (v == "info") return LogLevel::info;
    if (v == "debug") return LogLevel::debug;
    std::cerr << "tailspin: unknown TAILSPIN_LOG '" << v << "', using info\n";
    return LogLevel::info;
  }();
  return level;
}

void log(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  static constexpr const char* names[] = {"error", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace tailspin
