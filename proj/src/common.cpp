#include "tica/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace tica {

namespace {

LogLevel parse_level() {
  const char* env = std::getenv("TICA_LOG");
  if (env == nullptr) return LogLevel::warn;
  const std::string v(env);
  if (v == "error") return LogLevel::error;
  if (v == "warn") return LogLevel::warn;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

const char* level_name(LogLevel level) {
  switch (level) {
    case LogLevel::error: return "error";
    case LogLevel::warn: return "warn";
    case LogLevel::info: return "info";
    default: return "debug";
  }
}

std::mutex log_mutex;

}  // namespace

LogLevel log_level() {
  static const LogLevel level = parse_level();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << "[tica:" << level_name(level) << "] " << msg << "\n";
}

}  // namespace tica
