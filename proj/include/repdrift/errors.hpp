#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace repdrift {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition (shape mismatch, asymmetric input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An iterative numeric routine failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Procrustes source (or target) has no spread.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A snapshot store is missing a required cell.
class StoreIntegrityError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input. Carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace repdrift
