#include "conpare/log.hpp"

#include <iostream>
#include <mutex>

namespace conpare {
namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h;
  return h;
}

void emit(const char* prefix, const std::string& message) {
  std::lock_guard lock(handler_mutex());
  if (handler_slot()) {
    handler_slot()(std::string(prefix) + message);
    return;
  }
  std::cerr << prefix << message << '\n';
}

}  // namespace

void warn(const std::string& message) { emit("warning: ", message); }

void notice(const std::string& message) { emit("notice: ", message); }

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  WarningHandler previous = std::move(handler_slot());
  handler_slot() = std::move(handler);
  return previous;
}

}  // namespace conpare
