#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgelam {

enum class Errc {
  horizon_exceeded,
  unreachable_device,
  invalid_width,
  rank_out_of_range,
  dimension_mismatch,
  infeasible_storage,
  non_square_block,
  cycle_detected,
  unplaced_microservice,
  instance_too_large,
  infeasible_memory,
  insufficient_replication,
  no_feasible_action,
  invalid_parameter,
  insufficient_data,
  config_parse,
  missing_section,
  io_error,
};

// Stable machine-readable name, e.g. "horizon-exceeded".
std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace edgelam
