#include "edgelam/error.hpp"

namespace edgelam {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::horizon_exceeded: return "horizon-exceeded";
    case Errc::unreachable_device: return "unreachable-device";
    case Errc::invalid_width: return "invalid-width";
    case Errc::rank_out_of_range: return "rank-out-of-range";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::infeasible_storage: return "infeasible-storage";
    case Errc::non_square_block: return "non-square-block";
    case Errc::cycle_detected: return "cycle-detected";
    case Errc::unplaced_microservice: return "unplaced-microservice";
    case Errc::instance_too_large: return "instance-too-large";
    case Errc::infeasible_memory: return "infeasible-memory";
    case Errc::insufficient_replication: return "insufficient-replication";
    case Errc::no_feasible_action: return "no-feasible-action";
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::insufficient_data: return "insufficient-data";
    case Errc::config_parse: return "config-parse";
    case Errc::missing_section: return "missing-section";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

}  // namespace edgelam
