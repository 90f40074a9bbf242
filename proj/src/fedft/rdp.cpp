#include "edgelam/rdp.hpp"

#include <cmath>
#include <limits>

#include "edgelam/error.hpp"

namespace edgelam::fedft {

std::vector<double> default_alpha_grid() {
  return {1.25, 1.5, 1.75, 2, 2.5, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 48, 64, 128, 256};
}

void validate(const PrivacySpec& spec) {
  if (!(spec.clip_norm > 0.0)) fail(Errc::invalid_parameter, "clip_norm must be > 0");
  if (!(spec.noise_multiplier > 0.0)) fail(Errc::invalid_parameter, "noise multiplier must be > 0");
  if (!(spec.delta > 0.0 && spec.delta < 1.0)) fail(Errc::invalid_parameter, "delta must be in (0,1)");
  if (spec.alpha_grid.empty()) fail(Errc::invalid_parameter, "alpha_grid must be nonempty");
  for (double a : spec.alpha_grid)
    if (!(a > 1.0)) fail(Errc::invalid_parameter, "every Renyi order must be > 1");
}

double rdp_gaussian(double alpha, double noise_multiplier, double clip_norm,
                    double sensitivity) {
  const double s = noise_multiplier * clip_norm;
  return alpha * sensitivity * sensitivity / (2.0 * s * s);
}

DpGuarantee rdp_epsilon(const PrivacySpec& spec, double sensitivity, std::size_t rounds) {
  validate(spec);
  if (!(sensitivity > 0.0)) fail(Errc::invalid_parameter, "sensitivity must be > 0");
  if (rounds < 1) fail(Errc::invalid_parameter, "rounds must be >= 1");
  DpGuarantee best{std::numeric_limits<double>::infinity(), spec.delta, 0.0};
  const double log_inv_delta = std::log(1.0 / spec.delta);
  for (double alpha : spec.alpha_grid) {
    const double eps = static_cast<double>(rounds) *
                           rdp_gaussian(alpha, spec.noise_multiplier, spec.clip_norm, sensitivity) +
                       log_inv_delta / (alpha - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_alpha = alpha;
    }
  }
  return best;
}

}  // namespace edgelam::fedft
