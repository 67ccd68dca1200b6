#pragma once

#include <string_view>

namespace tailspin {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// From TAILSPIN_LOG (error, info, debug); info when unset. An unrecognised
// value falls back to info with a warning on first use.
LogLevel log_level();
void log(LogLevel level, std::string_view message);

inline void log_info(std::string_view message) { log(LogLevel::info, message); }
inline void log_debug(std::string_view message) { log(LogLevel::debug, message); }
inline void log_error(std::string_view message) { log(LogLevel::error, message); }

}  // namespace tailspin
