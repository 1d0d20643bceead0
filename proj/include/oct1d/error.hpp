#pragma once

#include <stdexcept>
#include <string>

namespace oct1d {

enum class ErrorKind {
  Dimension,        // shape mismatch between operands
  DegenerateLength, // sequence too short for the operation
  LabelRange,       // class index outside [0, K)
  Contract,         // API misuse, e.g. backward on a non-scalar
  NonFinite,        // NaN/Inf produced by a forward op
  Config,           // invalid model/train/CLI configuration
  Parse,            // malformed input file
  Input,            // semantically invalid input data
  Io,               // filesystem failure
  Runtime,          // training divergence and similar
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace oct1d
