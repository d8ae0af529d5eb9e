#pragma once

#include "dexforge/contact.hpp"
#include "dexforge/geometry.hpp"
#include "dexforge/hand_model.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dexforge::sim {

/// Object-on-finger force and moment, world-aligned axes at the sensor origin.
struct Wrench {
  Vec2 force{Vec2::Zero()};
  double moment{0.0};

  bool is_zero() const { return force.x() == 0.0 && force.y() == 0.0 && moment == 0.0; }
};

struct Circle {
  double radius{0.01};
};

/// Convex polygon, counter-clockwise vertices in the body frame.
struct Polygon {
  std::vector<Vec2> vertices;

  static Polygon box(double width, double height);
};

using Shape = std::variant<Circle, Polygon>;

/// Prismatic rail: the body only translates along `axis` and never rotates.
/// Coulomb friction with coefficient `mu` acts on the load across the rail.
struct Rail {
  Vec2 axis{1.0, 0.0};
  double mu{0.0};
};

struct Body {
  std::string name;
  Shape shape{Circle{}};
  double mass{1.0};
  double inertia{1.0};
  Pose2 pose;
  Vec2 velocity{Vec2::Zero()};
  double angular_velocity{0.0};
  bool is_static{false};
  std::optional<Rail> rail;
};

/// Fills inertia from mass and shape for a uniform-density body.
void set_uniform_inertia(Body& body);

/// Virtual spring between the operator's hand and the grip point.
struct Handle {
  Vec2 target{Vec2::Zero()};
  double stiffness{2000.0};
  double damping{15.0};
};

struct Finger {
  hand::FingerChain chain;
  hand::JointState state;
  std::optional<Handle> handle;
  /// Sensor reading from the most recent step.
  Wrench wrench;
  /// Sensor origin at which `wrench` was aggregated.
  Vec2 sensor_origin{Vec2::Zero()};
};

/// One side of a contact: a rigid body, or one link of a finger.
struct EntityRef {
  enum class Kind : std::uint8_t { Body, Link };
  Kind kind{Kind::Body};
  int index{0};   // body index or finger index
  int link{-1};   // link index when kind == Link

  auto operator<=>(const EntityRef&) const = default;
  static EntityRef body(int i) { return {Kind::Body, i, -1}; }
  static EntityRef finger_link(int finger, int link) { return {Kind::Link, finger, link}; }
};

/// Identifies a persistent contact so its friction anchor survives steps.
struct ContactKey {
  EntityRef a;
  EntityRef b;
  int feature{0};

  auto operator<=>(const ContactKey&) const = default;
};

struct ContactRecord {
  ContactKey key;
  Vec2 point{Vec2::Zero()};
  /// Unit normal pointing from b into a.
  Vec2 normal{Vec2::Zero()};
  double penetration{0.0};
  double normal_force{0.0};
  double tangential_force{0.0};
  /// Total force applied to a; b receives the opposite.
  Vec2 force_on_a{Vec2::Zero()};
  bool slipping{false};
};

/// Axis-aligned world rectangle imaged by the fixed task camera.
struct Camera {
  double x_min{-0.1};
  double x_max{0.1};
  double y_min{-0.02};
  double y_max{0.18};
};

struct Scene {
  std::vector<Body> bodies;
  std::vector<Finger> fingers;
  ContactParams contact;
  Vec2 gravity{0.0, -9.81};
  double dt{1.0 / 600.0};
  Camera camera;
  std::int64_t step_index{0};
  std::map<ContactKey, double> anchors;
  std::vector<ContactRecord> contacts;

  double time() const { return static_cast<double>(step_index) * dt; }
};

/// World-frame vertices of a polygon body.
std::vector<Vec2> world_vertices(const Body& body);

}  // namespace dexforge::sim
