#ifndef CLINPROMPT_ERROR_H_
#define CLINPROMPT_ERROR_H_

#include <stdexcept>
#include <string>

namespace clinprompt {

// Base class for every error caused by bad input or a violated contract.
// The CLI maps these to exit code 1; anything else is an internal error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent file content. `line` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace clinprompt

#endif  // CLINPROMPT_ERROR_H_
