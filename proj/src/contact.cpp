#include "dexforge/contact.hpp"

#include "dexforge/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dexforge::sim {

void validate_params(const ContactParams& params) {
  if (!(params.k_n > 0.0)) throw ContractViolation("contact k_n must be positive");
  if (params.mu < 0.0) throw ContractViolation("contact mu must be non-negative");
  if (params.c_n < 0.0) throw ContractViolation("contact c_n must be non-negative");
  if (params.k_t < 0.0 || params.c_t < 0.0)
    throw ContractViolation("tangential contact parameters must be non-negative");
}

ContactForce contact_force(double penetration, double penetration_rate, double tangential_stretch,
                           const ContactParams& params, double stretch_rate) {
  ContactForce out;
  if (!(penetration > 0.0)) return out;
  out.normal = std::max(0.0, params.k_n * penetration + params.c_n * penetration_rate);
  const double limit = params.mu * out.normal;
  const double demanded = params.k_t * tangential_stretch + params.c_t * stretch_rate;
  out.stretch = tangential_stretch;
  if (std::abs(demanded) > limit) {
    out.slipping = true;
    out.tangential = std::copysign(limit, demanded);
    // The anchor slides so the spring alone sits on the cone boundary.
    out.stretch = params.k_t > 0.0 ? out.tangential / params.k_t : 0.0;
  } else {
    out.tangential = demanded;
  }
  return out;
}

}  // namespace dexforge::sim
