#pragma once

// Renyi-DP accounting for the Gaussian mechanism applied to clipped
// Jacobians.

#include <cstddef>
#include <vector>

namespace edgelam::fedft {

struct PrivacySpec {
  double clip_norm = 1.0;         // C
  double noise_multiplier = 1.0;  // sigma; noise stddev is sigma * C
  double delta = 1e-5;
  std::vector<double> alpha_grid;
};

std::vector<double> default_alpha_grid();

// Throws invalid-parameter when any field violates its domain.
void validate(const PrivacySpec& spec);

// Per-release RDP of order alpha: alpha * sensitivity^2 / (2 sigma^2 C^2).
double rdp_gaussian(double alpha, double noise_multiplier, double clip_norm,
                    double sensitivity);

struct DpGuarantee {
  double epsilon = 0.0;
  double delta = 0.0;
  double best_alpha = 0.0;
};

// Composes `rounds` releases and converts to (epsilon, delta)-DP:
// min over alpha of rounds * rdp(alpha) + ln(1/delta) / (alpha - 1).
DpGuarantee rdp_epsilon(const PrivacySpec& spec, double sensitivity, std::size_t rounds);

}  // namespace edgelam::fedft
