#pragma once

#include <stdexcept>
#include <string>

namespace tailspin {

// Error classes surfaced through the C API and the CLI's one-line error output.
enum class ErrorKind {
  config,
  dimension,
  numeric,
  domain,
  precondition,
  tape,
  io,
  oracle,
  internal,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define TAILSPIN_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

TAILSPIN_DEFINE_ERROR(ConfigError, config)
TAILSPIN_DEFINE_ERROR(DimensionError, dimension)
TAILSPIN_DEFINE_ERROR(NumericError, numeric)
TAILSPIN_DEFINE_ERROR(DomainError, domain)
TAILSPIN_DEFINE_ERROR(PreconditionError, precondition)
TAILSPIN_DEFINE_ERROR(TapeError, tape)
TAILSPIN_DEFINE_ERROR(IoError, io)
TAILSPIN_DEFINE_ERROR(OracleError, oracle)

#undef TAILSPIN_DEFINE_ERROR

}  // namespace tailspin
