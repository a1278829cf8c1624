#include "tpbnn/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace tpbnn {
namespace {

std::atomic<int> g_level{static_cast<int>(LogLevel::warning)};
std::mutex g_mutex;

void emit(const char* tag, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_warning(std::string_view message) {
  if (g_level.load() >= static_cast<int>(LogLevel::warning)) emit("warn", message);
}

void log_info(std::string_view message) {
  if (g_level.load() >= static_cast<int>(LogLevel::info)) emit("info", message);
}

}  // namespace tpbnn
