#include "enlg/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace enlg::log {

namespace {

Level from_env() {
  const char* env = std::getenv("ENLG_LOG");
  if (env == nullptr) return Level::Info;
  const std::string v(env);
  if (v == "debug") return Level::Debug;
  if (v == "warn") return Level::Warn;
  if (v == "error") return Level::Error;
  if (v == "off") return Level::Off;
  return Level::Info;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{from_env()};
  return level;
}

constexpr std::string_view tag(Level level) {
  switch (level) {
    case Level::Debug: return "debug";
    case Level::Info: return "info";
    case Level::Warn: return "warn";
    case Level::Error: return "error";
    default: return "";
  }
}

}  // namespace

Level threshold() { return current().load(); }
void set_threshold(Level level) { current().store(level); }

void write(Level level, std::string_view message) {
  if (level < threshold() || level == Level::Off) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::clog << "[enlg:" << tag(level) << "] " << message << '\n';
}

}  // namespace enlg::log
