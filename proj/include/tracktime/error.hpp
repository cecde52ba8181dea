#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tracktime {

enum class ErrorCode {
  invalid_extent,
  support_violation,
  probe_out_of_range,
  zero_norm,
  resolution,
  solver_singular,
  precondition,
  zero_absorption,
  zero_overlap,
  zero_transmission,
  backflow,
  empty_ensemble,
  all_reflected,
  tau_grid_coverage,
  nonpositive_denominator,
  config,
  io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_extent: return "invalid-extent";
    case ErrorCode::support_violation: return "support-violation";
    case ErrorCode::probe_out_of_range: return "probe-out-of-range";
    case ErrorCode::zero_norm: return "zero-norm";
    case ErrorCode::resolution: return "resolution";
    case ErrorCode::solver_singular: return "solver-singular";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::zero_absorption: return "zero-absorption";
    case ErrorCode::zero_overlap: return "zero-overlap";
    case ErrorCode::zero_transmission: return "zero-transmission";
    case ErrorCode::backflow: return "backflow";
    case ErrorCode::empty_ensemble: return "empty-ensemble";
    case ErrorCode::all_reflected: return "all-reflected";
    case ErrorCode::tau_grid_coverage: return "tau-grid-coverage";
    case ErrorCode::nonpositive_denominator: return "nonpositive-denominator";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code so
/// sweep drivers can flag a row instead of aborting.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tracktime
