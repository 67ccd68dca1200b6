#include "tailspin/error.hpp"

#include <cmath>
#include <numbers>

#include "tailspin/rng.hpp"

namespace tailspin {

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config_error";
    case ErrorKind::dimension: return "dimension_error";
    case ErrorKind::numeric: return "numeric_error";
    case ErrorKind::domain: return "domain_error";
    case ErrorKind::precondition: return "precondition_error";
    case ErrorKind::tape: return "tape_error";
    case ErrorKind::io: return "io_error";
    case ErrorKind::oracle: return "oracle_error";
    case ErrorKind::internal: return "internal_error";
  }
  return "internal_error";
}

double Rng::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tailspin
