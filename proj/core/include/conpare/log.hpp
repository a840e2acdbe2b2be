#pragma once

#include <functional>
#include <string>

namespace conpare {

// Non-fatal diagnostics (skipped labels, cache repairs, fallbacks). The
// default handler writes "warning: ..." lines to stderr.
using WarningHandler = std::function<void(const std::string&)>;

void warn(const std::string& message);
void notice(const std::string& message);

// Returns the previous handler. Passing an empty handler restores the default.
WarningHandler set_warning_handler(WarningHandler handler);

// Installs a handler for the lifetime of the guard; used by tests to capture
// warnings.
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler handler)
      : previous_(set_warning_handler(std::move(handler))) {}
  ~ScopedWarningHandler() { set_warning_handler(std::move(previous_)); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler previous_;
};

}  // namespace conpare
