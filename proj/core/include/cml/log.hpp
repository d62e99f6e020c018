// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace cml {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3, Off = 4 };

/// Process-wide threshold; initialised from CML_LOG (debug|info|warn|error|off), default warn.
LogLevel log_level();
void set_log_level(LogLevel level);
void log(LogLevel level, const std::string& message);

inline void log_info(const std::string& m) { log(LogLevel::Info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::Warn, m); }

}  // namespace cml
