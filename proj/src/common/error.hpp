// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gk {

// Coarse error classes. The C API maps these one-to-one onto status codes and
// the CLI maps them onto exit codes (argument -> 2, everything else -> 1).
enum class ErrorKind {
  argument,  // bad user-supplied value or flag
  shape,     // tensor extents do not line up
  contract,  // precondition of an operation violated by the caller
  data,      // input data rejected (degenerate pose, empty silhouette, ...)
  io,        // file missing, unreadable, or malformed
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::argument, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::shape, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::contract, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

}  // namespace gk
