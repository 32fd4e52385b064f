#pragma once

#include <stdexcept>
#include <string>

namespace qreg {

// Every library failure carries the name of the module that raised it so the
// CLI can report where a run went wrong.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace qreg
