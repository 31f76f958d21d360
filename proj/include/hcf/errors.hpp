#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hcf {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad experiment configuration (unknown keys, invalid values). CLI exit 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or malformed input data (files, corpora, streams). CLI exit 3.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized input; carries the byte offset of the defect.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : DataError(what + " (byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Numerical failure (rank deficiency, divergent estimate). CLI exit 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bitstream was produced by a different model version.
class VersionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

// Range-coder state violation or truncated payload.
class CorruptPayloadError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace hcf
