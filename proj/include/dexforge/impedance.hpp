#pragma once

// Cartesian impedance control of fingertip positions:
//   F   = kp (x_d - x_c) - kv xdot_c
//   tau = J^T F + g

#include "dexforge/scene.hpp"

#include <functional>
#include <vector>

namespace dexforge::control {

struct ImpedanceGains {
  double kp{220.0};  // N/m, diagonal
  double kv{0.0};    // N*s/m, diagonal

  /// Critically damped for an effective fingertip mass `m_eff`.
  static ImpedanceGains critically_damped(double kp, double m_eff = kEffectiveMass);

  static constexpr double kEffectiveMass = 0.05;
};

void validate_gains(const ImpedanceGains& gains);

ImpedanceGains default_gains();

Vec2 control_force(const ImpedanceGains& gains, const Vec2& x_desired, const Vec2& x_current,
                   const Vec2& xdot_current);

VecX joint_torques(const MatX& J, const Vec2& force, const VecX& gravity_torques);

/// Torques driving one finger of `scene` toward `x_desired`.
VecX impedance_torques(const sim::Scene& scene, int finger, const Vec2& x_desired,
                       const ImpedanceGains& gains);

struct TrackingOptions {
  int control_rate_hz{30};
  /// Re-evaluate the control law every physics step with the target held
  /// between control ticks. When false, torques are also held for the whole
  /// control period.
  bool update_torques_every_step{true};
};

/// Called once per control tick after the physics substeps of that tick.
using TickObserver = std::function<void(int tick, const sim::Scene& scene)>;

struct TrackedTick {
  int tick{0};
  std::vector<Vec2> tips;
  std::vector<sim::Wrench> wrenches;
  std::vector<Vec2> targets;
};

struct TrackingResult {
  std::vector<TrackedTick> ticks;
  sim::Scene final_scene;
};

int substeps_per_tick(const sim::Scene& scene, int control_rate_hz);

/// Tracks per-finger target sequences. targets[i][k] is the target of
/// finger finger_indices[i] over control tick k (held from tick k-1 to k).
/// Tick 0 is the initial state. Fingers not listed receive gravity
/// compensation only.
TrackingResult track_trajectory(sim::Scene scene, const std::vector<int>& finger_indices,
                                const std::vector<std::vector<Vec2>>& targets,
                                const ImpedanceGains& gains, const TrackingOptions& options = {},
                                const TickObserver& observer = {});

/// One control period of impedance tracking, advancing `scene` in place.
std::vector<sim::Wrench> run_control_period(sim::Scene& scene, const std::vector<int>& finger_indices,
                                            const std::vector<Vec2>& targets,
                                            const ImpedanceGains& gains, int substeps,
                                            bool update_every_step = true);

}  // namespace dexforge::control
