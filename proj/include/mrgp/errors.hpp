#pragma once

#include <stdexcept>
#include <string>

namespace mrgp {

// Base class for every error raised by the library. Callers that only care
// about "something numeric or structural went wrong" can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class Singular : public Error {
 public:
  using Error::Error;
};

class NonPositiveStep : public Error {
 public:
  using Error::Error;
};

class WindowTooLong : public Error {
 public:
  WindowTooLong(const std::string& what, long min_length)
      : Error(what), min_length_(min_length) {}
  long min_length() const { return min_length_; }

 private:
  long min_length_;
};

class MissingCache : public Error {
 public:
  using Error::Error;
};

class UnsupportedOp : public Error {
 public:
  using Error::Error;
};

class NonScalarRoot : public Error {
 public:
  using Error::Error;
};

class MalformedHeader : public Error {
 public:
  MalformedHeader(const std::string& what, std::string column) : Error(what), column_(std::move(column)) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class NonUniformSpacing : public Error {
 public:
  NonUniformSpacing(const std::string& what, long row) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class NonFiniteValue : public Error {
 public:
  NonFiniteValue(const std::string& what, long row) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace mrgp
