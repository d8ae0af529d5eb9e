#include "dexforge/hand_model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace dexforge::hand {

namespace {

void check_dims(const FingerChain& chain, const VecX& q, const char* what) {
  if (q.size() != chain.num_joints()) {
    std::ostringstream os;
    os << what << ": expected " << chain.num_joints() << " joint values, got " << q.size();
    throw ContractViolation(os.str());
  }
}

double rod_inertia(double mass, double length) { return mass * length * length / 12.0; }

}  // namespace

double FingerChain::reach() const {
  return std::accumulate(link_lengths.begin(), link_lengths.end(), 0.0);
}

void validate_chain(const FingerChain& chain) {
  const auto n = chain.link_lengths.size();
  if (n == 0) throw ContractViolation("finger chain needs at least one link");
  if (chain.link_masses.size() != n || chain.link_com_offsets.size() != n ||
      chain.joint_limits.size() != n)
    throw ContractViolation("finger chain per-link arrays disagree in length");
  for (size_t i = 0; i < n; ++i) {
    if (!(chain.link_lengths[i] > 0.0)) throw ContractViolation("link lengths must be positive");
    if (chain.link_masses[i] < 0.0) throw ContractViolation("link masses must be non-negative");
    if (!(chain.joint_limits[i].lo < chain.joint_limits[i].hi))
      throw ContractViolation("joint limit lo must be below hi");
  }
  const int s = chain.sensor_link();
  if (s < 0 || s >= static_cast<int>(n)) throw ContractViolation("sensor link index out of range");
  if (chain.sensor_offset < 0.0 || chain.sensor_offset > chain.link_lengths[s])
    throw ContractViolation("sensor offset must lie on the sensor link");
  if (s == 0 && chain.sensor_offset == 0.0)
    throw ContractViolation("sensor at the chain root leaves no grip point proximal to it");
}

std::vector<double> link_angles(const FingerChain& chain, const VecX& q) {
  check_dims(chain, q, "link_angles");
  std::vector<double> angles(q.size());
  double theta = chain.base_pose.angle;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    theta += q[i];
    angles[i] = theta;
  }
  return angles;
}

std::vector<Vec2> joint_positions(const FingerChain& chain, const VecX& q) {
  const auto angles = link_angles(chain, q);
  std::vector<Vec2> points;
  points.reserve(angles.size() + 1);
  Vec2 p = chain.base_pose.position;
  points.push_back(p);
  for (size_t i = 0; i < angles.size(); ++i) {
    p += chain.link_lengths[i] * unit(angles[i]);
    points.push_back(p);
  }
  return points;
}

Vec2 forward_kinematics(const FingerChain& chain, const VecX& q) {
  check_dims(chain, q, "forward_kinematics");
  return joint_positions(chain, q).back();
}

Vec2 point_on_link(const FingerChain& chain, const VecX& q, int link, double along) {
  const auto angles = link_angles(chain, q);
  const auto joints = joint_positions(chain, q);
  return joints[link] + along * unit(angles[link]);
}

MatX point_jacobian(const FingerChain& chain, const VecX& q, int link, const Vec2& point) {
  check_dims(chain, q, "point_jacobian");
  const auto joints = joint_positions(chain, q);
  MatX J = MatX::Zero(kWorkspaceDim, chain.num_joints());
  for (int j = 0; j <= link; ++j) J.col(j) = perp(point - joints[j]);
  return J;
}

MatX jacobian(const FingerChain& chain, const VecX& q) {
  check_dims(chain, q, "jacobian");
  const int last = chain.num_joints() - 1;
  return point_jacobian(chain, q, last, forward_kinematics(chain, q));
}

VecX gravity_vector(const FingerChain& chain, const VecX& q, const Vec2& gravity) {
  check_dims(chain, q, "gravity_vector");
  VecX tau = VecX::Zero(q.size());
  for (int i = 0; i < chain.num_joints(); ++i) {
    if (chain.link_masses[i] == 0.0) continue;
    const Vec2 com = point_on_link(chain, q, i, chain.link_com_offsets[i]);
    tau -= chain.link_masses[i] * point_jacobian(chain, q, i, com).transpose() * gravity;
  }
  return tau;
}

double potential_energy(const FingerChain& chain, const VecX& q, const Vec2& gravity) {
  check_dims(chain, q, "potential_energy");
  double u = 0.0;
  for (int i = 0; i < chain.num_joints(); ++i) {
    const Vec2 com = point_on_link(chain, q, i, chain.link_com_offsets[i]);
    u -= chain.link_masses[i] * gravity.dot(com);
  }
  return u;
}

MatX mass_matrix(const FingerChain& chain, const VecX& q) {
  check_dims(chain, q, "mass_matrix");
  const int n = chain.num_joints();
  MatX M = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double m = chain.link_masses[i];
    const Vec2 com = point_on_link(chain, q, i, chain.link_com_offsets[i]);
    const MatX Jv = point_jacobian(chain, q, i, com);
    M += m * Jv.transpose() * Jv;
    // Angular velocity of link i is the sum of joint rates 0..i.
    const double inertia = rod_inertia(m, chain.link_lengths[i]);
    M.topLeftCorner(i + 1, i + 1).array() += inertia;
  }
  return M;
}

VecX bias_forces(const FingerChain& chain, const VecX& q, const VecX& qdot) {
  check_dims(chain, q, "bias_forces");
  check_dims(chain, qdot, "bias_forces");
  const int n = chain.num_joints();
  const auto angles = link_angles(chain, q);
  std::vector<double> omega(n);
  double w = 0.0;
  for (int i = 0; i < n; ++i) {
    w += qdot[i];
    omega[i] = w;
  }
  VecX h = VecX::Zero(n);
  Vec2 accumulated = Vec2::Zero();  // centripetal acceleration of joint i
  for (int i = 0; i < n; ++i) {
    const Vec2 u = unit(angles[i]);
    const Vec2 a_com = accumulated - chain.link_com_offsets[i] * omega[i] * omega[i] * u;
    if (chain.link_masses[i] != 0.0) {
      const Vec2 com = point_on_link(chain, q, i, chain.link_com_offsets[i]);
      h += chain.link_masses[i] * point_jacobian(chain, q, i, com).transpose() * a_com;
    }
    accumulated -= chain.link_lengths[i] * omega[i] * omega[i] * u;
  }
  return h;
}

double kinetic_energy(const FingerChain& chain, const VecX& q, const VecX& qdot) {
  return 0.5 * qdot.dot(mass_matrix(chain, q) * qdot);
}

Vec2 sensor_origin(const FingerChain& chain, const VecX& q) {
  return point_on_link(chain, q, chain.sensor_link(), chain.sensor_offset);
}

std::pair<int, double> grip_location(const FingerChain& chain) {
  const int s = chain.sensor_link();
  if (chain.sensor_offset > 0.0) return {s, 0.5 * chain.sensor_offset};
  return {s - 1, 0.5 * chain.link_lengths[s - 1]};
}

Vec2 grip_point(const FingerChain& chain, const VecX& q) {
  const auto [link, along] = grip_location(chain);
  return point_on_link(chain, q, link, along);
}

IkResult solve_ik(const FingerChain& chain, const Vec2& target, const VecX& q_seed,
                  const IkOptions& options) {
  check_dims(chain, q_seed, "solve_ik");
  IkResult result{q_seed, false, 0, (forward_kinematics(chain, q_seed) - target).norm()};
  if (result.residual <= options.tolerance) {
    result.converged = true;
    return result;
  }
  VecX q = q_seed;
  VecX best = q;
  double best_residual = result.residual;
  const double lambda2 = options.damping * options.damping;
  constexpr double kMaxStep = 0.3;
  int it = 0;
  for (; it < options.max_iters; ++it) {
    const Vec2 err = target - forward_kinematics(chain, q);
    if (err.norm() <= options.tolerance) break;
    const MatX J = jacobian(chain, q);
    const Eigen::Matrix2d JJt = J * J.transpose() + lambda2 * Eigen::Matrix2d::Identity();
    VecX dq = J.transpose() * JJt.ldlt().solve(err);
    const double step = dq.cwiseAbs().maxCoeff();
    if (step > kMaxStep) dq *= kMaxStep / step;
    q += dq;
    for (int i = 0; i < q.size(); ++i)
      q[i] = std::clamp(q[i], chain.joint_limits[i].lo, chain.joint_limits[i].hi);
    const double r = (forward_kinematics(chain, q) - target).norm();
    if (r < best_residual) {
      best_residual = r;
      best = q;
    }
  }
  result.q = best;
  result.residual = best_residual;
  result.iterations = it;
  result.converged = best_residual <= options.tolerance;
  return result;
}

}  // namespace dexforge::hand
