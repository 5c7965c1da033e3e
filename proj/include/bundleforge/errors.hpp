#pragma once

#include <stdexcept>
#include <string>

namespace bundleforge {

// Error categories map to CLI exit codes (see tools/).
enum class ErrorKind {
  generic = 1,
  config = 2,
  parse = 3,
  prerequisite = 4,
  contract = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(ErrorKind::contract, msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(ErrorKind::contract, msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(ErrorKind::parse, msg) {}
};

struct PrerequisiteError : Error {
  explicit PrerequisiteError(const std::string& msg)
      : Error(ErrorKind::prerequisite, msg) {}
};

}  // namespace bundleforge
