#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace shopmatch {

// Every error carries a short machine-readable category, printed by the CLI
// as the first token of its single-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

// Violated precondition of an operation (e.g. batch of one in train mode).
struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what) : Error("parameter", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error("data", what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error("domain", what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error("validation", what) {}
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error("format", what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace shopmatch
