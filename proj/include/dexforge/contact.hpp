#pragma once

namespace dexforge::sim {

/// Penalty contact law parameters shared by every contact in a scene.
struct ContactParams {
  double k_n{2.0e4};  // N/m
  double c_n{8.0};    // N*s/m
  double k_t{4.0e3};  // N/m
  double mu{0.8};
  /// Damping on the tangential anchor spring (N*s/m). Zero gives the pure
  /// spring-and-clamp stick-slip law.
  double c_t{0.0};
};

void validate_params(const ContactParams& params);

struct ContactForce {
  double normal{0.0};
  /// Restoring tangential force, signed along the stretch direction.
  double tangential{0.0};
  bool slipping{false};
  /// Tangential stretch after this evaluation; slides back onto the cone edge
  /// when the contact slips.
  double stretch{0.0};
};

/// f_n = max(0, k_n*d + c_n*d_rate) for d > 0; f_t = clamp(k_t*s, -mu*f_n, mu*f_n).
ContactForce contact_force(double penetration, double penetration_rate, double tangential_stretch,
                           const ContactParams& params, double stretch_rate = 0.0);

}  // namespace dexforge::sim
