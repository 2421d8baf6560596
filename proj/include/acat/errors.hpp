#pragma once

#include <stdexcept>
#include <string>

namespace acat {

// Base of every error thrown by the library. Device-level faults that the
// sequencer is expected to recover from derive from DeviceFault.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string token)
      : Error(message + " (offending token: '" + token + "')"), token_(std::move(token)) {}
  const std::string& token() const noexcept { return token_; }

 private:
  std::string token_;
};

class InputError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class IOError : public Error { using Error::Error; };
class DuplicatePin : public Error { using Error::Error; };

// motion
class NotHomed : public Error { using Error::Error; };
class LimitError : public Error { using Error::Error; };

// goniometry
class DegenerateCap : public Error { using Error::Error; };
class FitError : public Error { using Error::Error; };

// Faults reported back to the sequencer as device feedback.
class DeviceFault : public Error { using Error::Error; };
class HomingTimeout : public DeviceFault { using DeviceFault::DeviceFault; };
class ActuatorFault : public DeviceFault { using DeviceFault::DeviceFault; };
class DryDispense : public DeviceFault { using DeviceFault::DeviceFault; };
class PositionError : public DeviceFault { using DeviceFault::DeviceFault; };
class MeasurementFault : public DeviceFault { using DeviceFault::DeviceFault; };

}  // namespace acat
