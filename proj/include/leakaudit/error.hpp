#ifndef LEAKAUDIT_ERROR_HPP
#define LEAKAUDIT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace leakaudit {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes (config 2, data 3, stage 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unreadable config/rules file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a contract: invalid record, single-class labels,
// dimension mismatch, unknown column, non-finite feature.
class DataError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace leakaudit

#endif  // LEAKAUDIT_ERROR_HPP
