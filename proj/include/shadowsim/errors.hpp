#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace shadowsim {

// Base class for every operation failure raised by the framework.
class SimError : public std::runtime_error {
 public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Backend output could not be parsed into the expected structure.
// Carries the raw text for diagnostics.
class ParseError : public SimError {
 public:
  ParseError(const std::string& what, std::string raw_text)
      : SimError(what + "\n--- raw text ---\n" + raw_text),
        raw_text_(std::move(raw_text)) {}

  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

// Generation backend failure. `retryable` distinguishes transient network
// faults from permanent misconfiguration.
class BackendError : public SimError {
 public:
  BackendError(const std::string& what, bool retryable)
      : SimError(what), retryable_(retryable) {}

  bool retryable() const { return retryable_; }

 private:
  bool retryable_ = false;
};

// Config or schema validation failure; message lists every violation.
class ConfigError : public SimError {
 public:
  explicit ConfigError(const std::string& what) : SimError(what) {}
};

}  // namespace shadowsim
