#pragma once

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

// Minimal leveled logging to stderr. TEFORMER_LOG selects the threshold
// (debug, info, warn, error, off); default is info.

namespace teformer::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("TEFORMER_LOG");
    const std::string_view v = env ? env : "info";
    if (v == "debug") return Level::kDebug;
    if (v == "warn") return Level::kWarn;
    if (v == "error") return Level::kError;
    if (v == "off") return Level::kOff;
    return Level::kInfo;
  }();
  return level;
}

inline void write(Level level, std::string_view tag, const std::string& message) {
  if (level < threshold()) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << '[' << tag << "] " << message << '\n';
}

inline void debug(const std::string& m) { write(Level::kDebug, "debug", m); }
inline void info(const std::string& m) { write(Level::kInfo, "info", m); }
inline void warn(const std::string& m) { write(Level::kWarn, "warn", m); }
inline void error(const std::string& m) { write(Level::kError, "error", m); }

}  // namespace teformer::log
