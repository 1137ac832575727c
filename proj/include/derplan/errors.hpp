#pragma once

#include <stdexcept>
#include <string>

namespace derplan {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Case-file syntax error; carries 1-based line/column of the offending token.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& msg, int line, int column)
      : Error("syntax error at line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Model-level inconsistency: dangling bus reference, no slack bus,
/// disconnected graph, violated field invariant.
class SemanticError : public Error {
 public:
  using Error::Error;
};

/// Input uses a feature outside the supported subset (piecewise costs,
/// DC lines, out-of-service equipment).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// JSON case schema violation; carries the JSON-pointer path of the
/// offending element.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& msg, std::string pointer)
      : Error("schema error at " + pointer + ": " + msg),
        pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

/// An OPF solve failed in a context that required convergence.
class SolveError : public Error {
 public:
  using Error::Error;
};

/// The active set changed where an operation required it stable
/// (e.g. between the two solves of a central difference).
class BindingSetChangeError : public Error {
 public:
  using Error::Error;
};

/// Study configuration problem (missing file, bad key, invalid value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace derplan
