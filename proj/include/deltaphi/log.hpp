#pragma once

#include <functional>
#include <string>

namespace dphi {

enum class LogLevel { info, warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: standard error). Returns the
/// previous sink.
LogSink set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& message);
inline void log_info(const std::string& m) { log_message(LogLevel::info, m); }
inline void log_warning(const std::string& m) { log_message(LogLevel::warning, m); }

}  // namespace dphi
