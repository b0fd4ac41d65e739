// Error taxonomy shared by every module.  All failures are exceptions derived
// from critset::error; the CLI maps each subclass to a process exit code.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace critset {

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Syntax failure while reading a function definition.  `offset` is the
// 0-based position in the source text where parsing stopped.
class parse_error : public error {
 public:
  parse_error(const std::string& msg, std::size_t offset)
      : error(msg + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Domain failure while evaluating a function (log of nonpositive value,
// division by zero, point outside the unit cube, ...).
class eval_error : public error {
 public:
  using error::error;
};

// Argument outside the admissible numeric range of an estimate
// (epsilon too large for the mesh, epsilon outside a theorem's range, ...).
class range_error : public error {
 public:
  using error::error;
};

// Bad run configuration: unusable flags, malformed input files.
class config_error : public error {
 public:
  using error::error;
};

// A structural invariant the library maintains internally was violated.
class internal_error : public error {
 public:
  using error::error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw internal_error(what);
}

}  // namespace critset
