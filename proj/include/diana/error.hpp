#pragma once

#include <stdexcept>
#include <string>

namespace diana {

// Exit code classes used by the command-line tool.
enum class ErrorClass { Usage = 1, Data = 2, Invariant = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  ErrorClass cls_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorClass::Data, "configuration error: " + m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorClass::Data, "data error: " + m) {}
};
struct EncodingError : Error {
  explicit EncodingError(const std::string& m) : Error(ErrorClass::Data, "encoding error: " + m) {}
};
struct RoutingError : Error {
  explicit RoutingError(const std::string& m) : Error(ErrorClass::Data, "routing error: " + m) {}
};
struct CalibrationError : Error {
  explicit CalibrationError(const std::string& m) : Error(ErrorClass::Data, "calibration error: " + m) {}
};
struct EvaluationError : Error {
  explicit EvaluationError(const std::string& m) : Error(ErrorClass::Data, "evaluation error: " + m) {}
};
struct CompatibilityError : Error {
  explicit CompatibilityError(const std::string& m) : Error(ErrorClass::Data, "compatibility error: " + m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorClass::Data, "parse error: " + m) {}
};
struct InvariantError : Error {
  explicit InvariantError(const std::string& m) : Error(ErrorClass::Invariant, "invariant violation: " + m) {}
};

}  // namespace diana
