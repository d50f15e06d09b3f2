#include "deltaphi/log.hpp"

#include <iostream>
#include <mutex>
#include <utility>

namespace dphi {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& m) {
    std::cerr << (level == LogLevel::warning ? "warning: " : "") << m << '\n';
  };
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink next) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(sink(), std::move(next));
}

void log_message(LogLevel level, const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(level, message);
}

}  // namespace dphi
