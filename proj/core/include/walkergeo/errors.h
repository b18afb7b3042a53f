#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace walkergeo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::string expected);
  std::size_t offset() const { return offset_; }
  const std::string& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::string expected_;
};

class UnboundVariableError : public Error {
 public:
  explicit UnboundVariableError(std::string name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// ln/sqrt of a non-positive value, division by zero, non-integer power of a
// non-positive base. offset is the byte offset of the failing node in its
// source text when known.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what, std::ptrdiff_t offset = -1);
  std::ptrdiff_t offset() const { return offset_; }

 private:
  std::ptrdiff_t offset_;
};

class SingularMetricError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ProfileError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class ZeroLambdaError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class FlowError : public Error {
 public:
  using Error::Error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class ReconstructionError : public Error {
 public:
  using Error::Error;
};

class UnknownExampleError : public Error {
 public:
  using Error::Error;
};

}  // namespace walkergeo
