#include "dexforge/impedance.hpp"

#include "dexforge/simulator.hpp"

#include <cmath>

namespace dexforge::control {

ImpedanceGains ImpedanceGains::critically_damped(double kp, double m_eff) {
  return {kp, 2.0 * std::sqrt(kp * m_eff)};
}

void validate_gains(const ImpedanceGains& gains) {
  if (!(gains.kp > 0.0)) throw ContractViolation("impedance kp must be positive");
  if (gains.kv < 0.0) throw ContractViolation("impedance kv must be non-negative");
}

ImpedanceGains default_gains() { return ImpedanceGains::critically_damped(220.0); }

Vec2 control_force(const ImpedanceGains& gains, const Vec2& x_desired, const Vec2& x_current,
                   const Vec2& xdot_current) {
  return gains.kp * (x_desired - x_current) - gains.kv * xdot_current;
}

VecX joint_torques(const MatX& J, const Vec2& force, const VecX& gravity_torques) {
  if (J.rows() != kWorkspaceDim || J.cols() != gravity_torques.size())
    throw ContractViolation("joint_torques: Jacobian does not match the gravity vector");
  return J.transpose() * force + gravity_torques;
}

VecX impedance_torques(const sim::Scene& scene, int finger, const Vec2& x_desired,
                       const ImpedanceGains& gains) {
  const auto& f = scene.fingers.at(finger);
  const MatX J = hand::jacobian(f.chain, f.state.q);
  const Vec2 x = hand::forward_kinematics(f.chain, f.state.q);
  const Vec2 xdot = J * f.state.qdot;
  const VecX g = hand::gravity_vector(f.chain, f.state.q, scene.gravity);
  return joint_torques(J, control_force(gains, x_desired, x, xdot), g);
}

int substeps_per_tick(const sim::Scene& scene, int control_rate_hz) {
  if (control_rate_hz <= 0) throw ContractViolation("control rate must be positive");
  const double ratio = 1.0 / (scene.dt * control_rate_hz);
  const long n = std::lround(ratio);
  if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9)
    throw ContractViolation("control rate must divide the physics rate");
  return static_cast<int>(n);
}

std::vector<sim::Wrench> run_control_period(sim::Scene& scene, const std::vector<int>& finger_indices,
                                            const std::vector<Vec2>& targets,
                                            const ImpedanceGains& gains, int substeps,
                                            bool update_every_step) {
  std::vector<VecX> torques;
  std::vector<sim::Wrench> wrenches;
  for (int s = 0; s < substeps; ++s) {
    if (s == 0 || update_every_step) {
      torques = sim::gravity_compensation(scene);
      for (size_t i = 0; i < finger_indices.size(); ++i)
        torques[finger_indices[i]] = impedance_torques(scene, finger_indices[i], targets[i], gains);
    }
    wrenches = sim::advance(scene, torques);
  }
  return wrenches;
}

TrackingResult track_trajectory(sim::Scene scene, const std::vector<int>& finger_indices,
                                const std::vector<std::vector<Vec2>>& targets,
                                const ImpedanceGains& gains, const TrackingOptions& options,
                                const TickObserver& observer) {
  validate_gains(gains);
  if (targets.size() != finger_indices.size())
    throw ContractViolation("track_trajectory: one target sequence per tracked finger");
  size_t ticks = targets.empty() ? 0 : targets.front().size();
  for (const auto& seq : targets)
    if (seq.size() != ticks) throw ContractViolation("track_trajectory: target sequences not time-aligned");
  for (int fi : finger_indices)
    if (fi < 0 || fi >= static_cast<int>(scene.fingers.size()))
      throw ContractViolation("track_trajectory: finger index out of range");
  const int substeps = substeps_per_tick(scene, options.control_rate_hz);

  TrackingResult result;
  result.ticks.reserve(ticks);
  auto record = [&](int tick, const std::vector<Vec2>& tick_targets) {
    TrackedTick t;
    t.tick = tick;
    for (size_t i = 0; i < scene.fingers.size(); ++i) {
      t.tips.push_back(sim::fingertip(scene, static_cast<int>(i)));
      t.wrenches.push_back(scene.fingers[i].wrench);
    }
    t.targets = tick_targets;
    result.ticks.push_back(std::move(t));
    if (observer) observer(tick, scene);
  };

  std::vector<Vec2> tick_targets(finger_indices.size());
  for (size_t k = 0; k < ticks; ++k) {
    for (size_t i = 0; i < finger_indices.size(); ++i) tick_targets[i] = targets[i][k];
    if (k > 0)
      run_control_period(scene, finger_indices, tick_targets, gains, substeps,
                         options.update_torques_every_step);
    record(static_cast<int>(k), tick_targets);
  }
  result.final_scene = std::move(scene);
  return result;
}

}  // namespace dexforge::control
