#pragma once

#include <stdexcept>
#include <string>

namespace flowrl {

// Every failure surfaced by the library derives from Error so callers can
// catch the family without depending on a particular module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowrl
