#include "ddtcdr/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace ddtcdr::log {
namespace {

Level from_env() {
  const char* env = std::getenv("DDTCDR_VERBOSITY");
  if (env == nullptr) return Level::warn;
  const std::string v(env);
  if (v == "quiet") return Level::quiet;
  if (v == "info") return Level::info;
  if (v == "debug") return Level::debug;
  return Level::warn;
}

std::atomic<int>& current() {
  static std::atomic<int> level{static_cast<int>(from_env())};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

void emit(Level level, const char* tag, std::string_view msg) {
  if (static_cast<int>(level) > current().load()) return;
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

Level verbosity() { return static_cast<Level>(current().load()); }
void set_verbosity(Level level) { current().store(static_cast<int>(level)); }

void warn(std::string_view msg) { emit(Level::warn, "warn", msg); }
void info(std::string_view msg) { emit(Level::info, "info", msg); }
void debug(std::string_view msg) { emit(Level::debug, "debug", msg); }

}  // namespace ddtcdr::log
