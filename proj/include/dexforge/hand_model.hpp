#pragma once

// Planar serial-chain finger kinematics: forward kinematics, Jacobians,
// gravity statics, the joint-space mass matrix used by the simulator, and a
// damped least-squares IK used by the demonstration drivers.

#include "dexforge/geometry.hpp"

#include <utility>
#include <vector>

namespace dexforge::hand {

struct JointLimit {
  double lo{-kPi};
  double hi{kPi};
};

/// A finger made of revolute joints. Joint i sits at the proximal end of link i.
struct FingerChain {
  std::vector<double> link_lengths;
  std::vector<double> link_masses;
  /// Distance of each link's centre of mass from its proximal joint.
  std::vector<double> link_com_offsets;
  std::vector<JointLimit> joint_limits;
  Pose2 base_pose;
  /// Link whose proximal end (shifted by sensor_offset) carries the F/T sensor.
  int sensor_link_index{-1};
  /// Distance from the sensor link's proximal joint to the sensor origin.
  double sensor_offset{0.0};
  /// Capsule radius of every link; the fingertip is the distal cap.
  double link_radius{0.008};
  /// Viscous friction in every joint (N*m*s/rad).
  double joint_damping{0.0};

  int num_joints() const { return static_cast<int>(link_lengths.size()); }
  int sensor_link() const { return sensor_link_index < 0 ? num_joints() - 1 : sensor_link_index; }
  double reach() const;
};

/// Throws ContractViolation when an invariant of the chain does not hold.
void validate_chain(const FingerChain& chain);

struct JointState {
  VecX q;
  VecX qdot;
  bool clamped{false};

  static JointState at_rest(const VecX& q) { return {q, VecX::Zero(q.size()), false}; }
};

/// Absolute angle of every link.
std::vector<double> link_angles(const FingerChain& chain, const VecX& q);

/// Joint positions p_0..p_n; p_n is the fingertip.
std::vector<Vec2> joint_positions(const FingerChain& chain, const VecX& q);

Vec2 forward_kinematics(const FingerChain& chain, const VecX& q);

/// World coordinates of the point `along` metres from the proximal joint of `link`.
Vec2 point_on_link(const FingerChain& chain, const VecX& q, int link, double along);

/// Fingertip Jacobian (kWorkspaceDim x n).
MatX jacobian(const FingerChain& chain, const VecX& q);

/// Jacobian of a world point rigidly attached to `link`.
MatX point_jacobian(const FingerChain& chain, const VecX& q, int link, const Vec2& point);

/// Joint torques that statically hold the chain against `gravity`.
VecX gravity_vector(const FingerChain& chain, const VecX& q, const Vec2& gravity);

/// Summed link potential energy, zero at the world origin height.
double potential_energy(const FingerChain& chain, const VecX& q, const Vec2& gravity);

/// Joint-space inertia with point-mass links plus slender-rod rotational inertia.
MatX mass_matrix(const FingerChain& chain, const VecX& q);

/// Velocity-product (Coriolis and centrifugal) generalized forces.
VecX bias_forces(const FingerChain& chain, const VecX& q, const VecX& qdot);

double kinetic_energy(const FingerChain& chain, const VecX& q, const VecX& qdot);

Vec2 sensor_origin(const FingerChain& chain, const VecX& q);

/// Link and distance along it of the operator grip: halfway between the
/// sensor link's joint and the sensor when the sensor is offset along its
/// link, otherwise the midpoint of the link proximal to the sensor.
std::pair<int, double> grip_location(const FingerChain& chain);

Vec2 grip_point(const FingerChain& chain, const VecX& q);

struct IkOptions {
  double damping{1e-3};
  int max_iters{200};
  double tolerance{1e-4};
};

struct IkResult {
  VecX q;
  bool converged{false};
  int iterations{0};
  double residual{0.0};
};

IkResult solve_ik(const FingerChain& chain, const Vec2& target, const VecX& q_seed,
                  const IkOptions& options = {});

}  // namespace dexforge::hand
