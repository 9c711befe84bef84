#pragma once
#ifndef WWMIX_ERRORS_HPP_
#define WWMIX_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace wwmix {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Matrix/vector dimension disagreement.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Violated construction invariant (negative proportion, duplicate label, ...).
class InvariantError : public Error {
  public:
    explicit InvariantError(const std::string& what) : Error(what) {}
};

/// Malformed input file or unparseable field.
class ParseError : public Error {
  public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

/// Bad configuration value.
class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvariantError(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

}  // namespace detail

}  // namespace wwmix

#endif  // WWMIX_ERRORS_HPP_
