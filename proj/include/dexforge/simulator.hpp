#pragma once

// Fixed-step planar rigid-body simulation with penalty contact. The step is
// a pure function of (scene, torques); nothing outside the Scene value is
// read or written.

#include "dexforge/scene.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace dexforge::sim {

class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(std::int64_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Advances the scene by one dt. `torques` holds one joint-torque vector per
/// finger. Returns the sensed wrench of every finger for this step.
std::vector<Wrench> advance(Scene& scene, std::span<const VecX> torques);

struct StepOutput {
  Scene scene;
  std::vector<Wrench> wrenches;
};

StepOutput step(Scene scene, std::span<const VecX> torques);

/// Object-on-finger wrench at the sensor, from the contacts of the last step.
Wrench sense_wrench(const Scene& scene, int finger_index);

/// Sums finger-side contact forces into a wrench about `origin`.
Wrench aggregate_wrench(const Vec2& origin, std::span<const Vec2> points,
                        std::span<const Vec2> forces);

/// Attaches (or retargets) the operator handle of a finger.
Scene apply_operator_handle(Scene scene, int finger_index, const Vec2& handle_target,
                            double handle_stiffness = 2000.0, double handle_damping = 15.0);

/// In-place form of apply_operator_handle.
void set_operator_handle(Scene& scene, int finger_index, const Vec2& handle_target,
                         double handle_stiffness = 2000.0, double handle_damping = 15.0);

void release_operator_handle(Scene& scene, int finger_index);

/// Force the handle currently exerts on the grip point.
Vec2 handle_force(const Scene& scene, int finger_index);

/// Per-finger torques that exactly cancel gravity at the current pose.
std::vector<VecX> gravity_compensation(const Scene& scene);

Vec2 fingertip(const Scene& scene, int finger_index);
Vec2 fingertip_velocity(const Scene& scene, int finger_index);

/// Whether a contact on `link` at `point` lies at or beyond the finger's sensor.
bool distal_to_sensor(const hand::FingerChain& chain, const VecX& q, int link, const Vec2& point);

/// Kinetic plus gravitational energy of bodies and fingers (no contact springs).
double mechanical_energy(const Scene& scene);

/// Throws ContractViolation on malformed scenes.
void validate_scene(const Scene& scene);

/// Signed distance from a point to a convex polygon (negative inside).
struct PolygonDistance {
  double distance{0.0};
  Vec2 normal{Vec2::Zero()};   // outward, at the closest boundary feature
  Vec2 closest{Vec2::Zero()};  // closest boundary point
};
PolygonDistance signed_distance(std::span<const Vec2> polygon, const Vec2& point);

}  // namespace dexforge::sim
