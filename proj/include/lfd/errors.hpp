#pragma once

#include <stdexcept>
#include <string>

namespace lfd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data violates a documented invariant (non-finite pixel, bad shape).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A file was readable but its contents do not follow the expected format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public Error {
 public:
  TimeoutError(const std::string& what, std::string request_id)
      : Error(what), request_id_(std::move(request_id)) {}
  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

}  // namespace lfd
