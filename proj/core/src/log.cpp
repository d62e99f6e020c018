// SPDX-License-Identifier: Apache-2.0
#include "cml/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>

namespace cml {

namespace {

LogLevel level_from_env() {
  const char* env = std::getenv("CML_LOG");
  if (env == nullptr) return LogLevel::Warn;
  if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
  if (std::strcmp(env, "info") == 0) return LogLevel::Info;
  if (std::strcmp(env, "error") == 0) return LogLevel::Error;
  if (std::strcmp(env, "off") == 0) return LogLevel::Off;
  return LogLevel::Warn;
}

std::atomic<LogLevel>& threshold() {
  static std::atomic<LogLevel> level{level_from_env()};
  return level;
}

const char* tag(LogLevel l) {
  switch (l) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    case LogLevel::Off: break;
  }
  return "";
}

}  // namespace

LogLevel log_level() { return threshold().load(); }
void set_log_level(LogLevel level) { threshold().store(level); }

void log(LogLevel level, const std::string& message) {
  if (level < log_level() || level == LogLevel::Off) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[cml " << tag(level) << "] " << message << "\n";
}

}  // namespace cml
