#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dexforge::sim {

Polygon Polygon::box(double width, double height) {
  const double w = 0.5 * width, h = 0.5 * height;
  return Polygon{{{-w, -h}, {w, -h}, {w, h}, {-w, h}}};
}

void set_uniform_inertia(Body& body) {
  if (const auto* c = std::get_if<Circle>(&body.shape)) {
    body.inertia = 0.5 * body.mass * c->radius * c->radius;
    return;
  }
  // Polygon second moment about its vertex centroid (exact for the boxes and
  // symmetric shapes the tasks use).
  const auto& v = std::get<Polygon>(body.shape).vertices;
  double area = 0.0, j = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % v.size()];
    const double c = cross(p, q);
    area += 0.5 * c;
    j += c * (p.squaredNorm() + p.dot(q) + q.squaredNorm()) / 12.0;
  }
  body.inertia = area > 0.0 ? body.mass * j / area : body.mass * 1e-6;
}

std::vector<Vec2> world_vertices(const Body& body) {
  const auto& local = std::get<Polygon>(body.shape).vertices;
  std::vector<Vec2> out;
  out.reserve(local.size());
  for (const auto& v : local) out.push_back(transform(body.pose, v));
  return out;
}

PolygonDistance signed_distance(std::span<const Vec2> polygon, const Vec2& point) {
  const size_t n = polygon.size();
  PolygonDistance out;
  double best_plane = -std::numeric_limits<double>::infinity();
  size_t best_edge = 0;
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2 e = polygon[(i + 1) % n] - a;
    const Vec2 normal = Vec2(e.y(), -e.x()).normalized();
    const double d = normal.dot(point - a);
    if (d > best_plane) {
      best_plane = d;
      best_edge = i;
    }
  }
  if (best_plane <= 0.0) {
    const Vec2& a = polygon[best_edge];
    const Vec2 e = polygon[(best_edge + 1) % n] - a;
    out.normal = Vec2(e.y(), -e.x()).normalized();
    out.distance = best_plane;
    out.closest = point - best_plane * out.normal;
    return out;
  }
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2 e = polygon[(i + 1) % n] - a;
    const double s = std::clamp((point - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
    const Vec2 c = a + s * e;
    const double d = (point - c).norm();
    if (d < best) {
      best = d;
      out.closest = c;
    }
  }
  out.distance = best;
  out.normal = (point - out.closest) / best;
  return out;
}

namespace {

struct SegmentClosest {
  double s{0.0};
  PolygonDistance dist;
};

// Signed distance to a convex polygon is convex along a segment, so a golden
// section search finds the deepest point.
SegmentClosest segment_polygon(std::span<const Vec2> polygon, const Vec2& a, const Vec2& b) {
  constexpr double kInvPhi = 0.6180339887498949;
  auto eval = [&](double s) { return signed_distance(polygon, a + s * (b - a)).distance; };
  double lo = 0.0, hi = 1.0;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 48; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = eval(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = eval(x2);
    }
  }
  SegmentClosest best{0.5 * (lo + hi), {}};
  best.dist = signed_distance(polygon, a + best.s * (b - a));
  for (double s : {0.0, 1.0}) {
    const auto d = signed_distance(polygon, a + s * (b - a));
    if (d.distance < best.dist.distance) best = {s, d};
  }
  return best;
}

double bounding_radius(const Body& body) {
  if (const auto* c = std::get_if<Circle>(&body.shape)) return c->radius;
  double r = 0.0;
  for (const auto& v : std::get<Polygon>(body.shape).vertices) r = std::max(r, v.norm());
  return r;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, Vec2* closest) {
  const Vec2 e = b - a;
  const double len2 = e.squaredNorm();
  const double s = len2 > 0.0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
  *closest = a + s * e;
  return (p - *closest).norm();
}

struct FingerKinematics {
  std::vector<Vec2> joints;
  std::vector<double> angles;
};

class StepContext {
 public:
  StepContext(Scene& scene) : scene_(scene) {
    kin_.reserve(scene.fingers.size());
    for (const auto& f : scene.fingers)
      kin_.push_back({hand::joint_positions(f.chain, f.state.q), hand::link_angles(f.chain, f.state.q)});
    body_force_.assign(scene.bodies.size(), Vec2::Zero());
    body_torque_.assign(scene.bodies.size(), 0.0);
    for (const auto& f : scene.fingers) finger_force_.push_back(VecX::Zero(f.chain.num_joints()));
    world_polys_.resize(scene.bodies.size());
    for (size_t i = 0; i < scene.bodies.size(); ++i)
      if (std::holds_alternative<Polygon>(scene.bodies[i].shape))
        world_polys_[i] = world_vertices(scene.bodies[i]);
  }

  Vec2 velocity_at(const EntityRef& e, const Vec2& p) const {
    if (e.kind == EntityRef::Kind::Body) {
      const Body& b = scene_.bodies[e.index];
      if (b.is_static) return Vec2::Zero();
      return b.velocity + b.angular_velocity * perp(p - b.pose.position);
    }
    const auto& f = scene_.fingers[e.index];
    Vec2 v = Vec2::Zero();
    for (int j = 0; j <= e.link; ++j) v += f.state.qdot[j] * perp(p - kin_[e.index].joints[j]);
    return v;
  }

  void apply(const EntityRef& e, const Vec2& p, const Vec2& force) {
    if (e.kind == EntityRef::Kind::Body) {
      Body& b = scene_.bodies[e.index];
      if (b.is_static) return;
      body_force_[e.index] += force;
      body_torque_[e.index] += cross(p - b.pose.position, force);
      return;
    }
    auto& tau = finger_force_[e.index];
    for (int j = 0; j <= e.link; ++j) tau[j] += perp(p - kin_[e.index].joints[j]).dot(force);
  }

  void add_contact(const ContactKey& key, const Vec2& point, const Vec2& normal, double depth) {
    const Vec2 v_rel = velocity_at(key.a, point) - velocity_at(key.b, point);
    const Vec2 tangent = perp(normal);
    const double rate = -v_rel.dot(normal);
    const double slide = v_rel.dot(tangent);
    const auto prev = scene_.anchors.find(key);
    const double stretch = (prev == scene_.anchors.end() ? 0.0 : prev->second) + slide * scene_.dt;
    const ContactForce cf = contact_force(depth, rate, stretch, scene_.contact, slide);
    const Vec2 force = cf.normal * normal - cf.tangential * tangent;
    anchors_[key] = cf.stretch;
    contacts_.push_back({key, point, normal, depth, cf.normal, cf.tangential, force, cf.slipping});
    apply(key.a, point, force);
    apply(key.b, point, -force);
  }

  void detect() {
    const auto& bodies = scene_.bodies;
    for (size_t fi = 0; fi < scene_.fingers.size(); ++fi) {
      const auto& chain = scene_.fingers[fi].chain;
      const double r = chain.link_radius;
      for (int l = 0; l < chain.num_joints(); ++l) {
        const Vec2& a = kin_[fi].joints[l];
        const Vec2& b = kin_[fi].joints[l + 1];
        for (size_t bi = 0; bi < bodies.size(); ++bi) {
          const Body& body = bodies[bi];
          Vec2 closest;
          const double reach = r + bounding_radius(body);
          if (point_segment_distance(body.pose.position, a, b, &closest) > reach) continue;
          const ContactKey key{EntityRef::finger_link(static_cast<int>(fi), l),
                               EntityRef::body(static_cast<int>(bi)), 0};
          if (const auto* c = std::get_if<Circle>(&body.shape)) {
            const double d = (closest - body.pose.position).norm();
            const double depth = r + c->radius - d;
            if (depth <= 0.0 || d == 0.0) continue;
            const Vec2 n = (closest - body.pose.position) / d;
            add_contact(key, closest - (r - 0.5 * depth) * n, n, depth);
          } else {
            const auto hit = segment_polygon(world_polys_[bi], a, b);
            const double depth = r - hit.dist.distance;
            if (depth <= 0.0) continue;
            const Vec2 p = a + hit.s * (b - a);
            add_contact(key, p - (r - 0.5 * depth) * hit.dist.normal, hit.dist.normal, depth);
          }
        }
      }
    }
    for (size_t i = 0; i < bodies.size(); ++i) {
      for (size_t j = i + 1; j < bodies.size(); ++j) {
        if (bodies[i].is_static && bodies[j].is_static) continue;
        const double gap = (bodies[i].pose.position - bodies[j].pose.position).norm();
        if (gap > bounding_radius(bodies[i]) + bounding_radius(bodies[j])) continue;
        body_pair(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }

  void body_pair(int i, int j) {
    const Body& bi = scene_.bodies[i];
    const Body& bj = scene_.bodies[j];
    const auto* ci = std::get_if<Circle>(&bi.shape);
    const auto* cj = std::get_if<Circle>(&bj.shape);
    if (ci && cj) {
      const Vec2 d = bi.pose.position - bj.pose.position;
      const double dist = d.norm();
      const double depth = ci->radius + cj->radius - dist;
      if (depth <= 0.0 || dist == 0.0) return;
      const Vec2 n = d / dist;
      add_contact({EntityRef::body(i), EntityRef::body(j), 0},
                  bj.pose.position + (cj->radius - 0.5 * depth) * n, n, depth);
      return;
    }
    if (ci || cj) {
      const int circle = ci ? i : j;
      const int poly = ci ? j : i;
      const double radius = ci ? ci->radius : cj->radius;
      const Vec2& center = scene_.bodies[circle].pose.position;
      const auto sd = signed_distance(world_polys_[poly], center);
      const double depth = radius - sd.distance;
      if (depth <= 0.0) return;
      add_contact({EntityRef::body(circle), EntityRef::body(poly), 0},
                  center - (radius - 0.5 * depth) * sd.normal, sd.normal, depth);
      return;
    }
    vertices_into(i, j);
    vertices_into(j, i);
  }

  // Vertices of body `a` penetrating polygon `b`.
  void vertices_into(int a, int b) {
    const auto& verts = world_polys_[a];
    for (size_t k = 0; k < verts.size(); ++k) {
      const auto sd = signed_distance(world_polys_[b], verts[k]);
      if (sd.distance >= 0.0) continue;
      const double depth = -sd.distance;
      add_contact({EntityRef::body(a), EntityRef::body(b), static_cast<int>(k)},
                  verts[k] + 0.5 * depth * sd.normal, sd.normal, depth);
    }
  }

  void apply_handles() {
    for (size_t fi = 0; fi < scene_.fingers.size(); ++fi) {
      const auto& f = scene_.fingers[fi];
      if (!f.handle) continue;
      const auto [link, along] = hand::grip_location(f.chain);
      const Vec2 grip = kin_[fi].joints[link] + along * unit(kin_[fi].angles[link]);
      const EntityRef ref = EntityRef::finger_link(static_cast<int>(fi), link);
      const Vec2 force = f.handle->stiffness * (f.handle->target - grip) -
                         f.handle->damping * velocity_at(ref, grip);
      apply(ref, grip, force);
    }
  }

  std::vector<Wrench> sense() {
    std::vector<Wrench> out(scene_.fingers.size());
    for (size_t fi = 0; fi < scene_.fingers.size(); ++fi) {
      auto& f = scene_.fingers[fi];
      const Vec2 origin = hand::sensor_origin(f.chain, f.state.q);
      std::vector<Vec2> points, forces;
      for (const auto& c : contacts_) {
        for (const auto* side : {&c.key.a, &c.key.b}) {
          if (side->kind != EntityRef::Kind::Link || side->index != static_cast<int>(fi)) continue;
          if (!distal_to_sensor(f.chain, f.state.q, side->link, c.point)) continue;
          points.push_back(c.point);
          forces.push_back(side == &c.key.a ? c.force_on_a : Vec2(-c.force_on_a));
        }
      }
      out[fi] = aggregate_wrench(origin, points, forces);
      f.wrench = out[fi];
      f.sensor_origin = origin;
    }
    return out;
  }

  void integrate(std::span<const VecX> torques) {
    const double dt = scene_.dt;
    for (size_t fi = 0; fi < scene_.fingers.size(); ++fi) {
      auto& f = scene_.fingers[fi];
      auto& st = f.state;
      const MatX M = hand::mass_matrix(f.chain, st.q);
      VecX rhs = torques[fi] - hand::gravity_vector(f.chain, st.q, scene_.gravity) -
                 hand::bias_forces(f.chain, st.q, st.qdot) - f.chain.joint_damping * st.qdot +
                 finger_force_[fi];
      const VecX qddot = M.ldlt().solve(rhs);
      st.qdot += qddot * dt;
      st.q += st.qdot * dt;
      st.clamped = false;
      for (int j = 0; j < st.q.size(); ++j) {
        const auto& lim = f.chain.joint_limits[j];
        if (st.q[j] < lim.lo || st.q[j] > lim.hi) {
          st.q[j] = std::clamp(st.q[j], lim.lo, lim.hi);
          st.qdot[j] = 0.0;
          st.clamped = true;
        }
      }
    }
    for (size_t bi = 0; bi < scene_.bodies.size(); ++bi) {
      Body& b = scene_.bodies[bi];
      if (b.is_static) continue;
      const Vec2 total = body_force_[bi] + b.mass * scene_.gravity;
      if (b.rail) {
        const Vec2 axis = b.rail->axis.normalized();
        const double along = total.dot(axis);
        const double load = std::abs(total.dot(perp(axis)));
        const double v_trial = b.velocity.dot(axis) + along / b.mass * dt;
        const double friction_dv = b.rail->mu * load / b.mass * dt;
        double v = 0.0;
        if (std::abs(v_trial) > friction_dv) v = v_trial - std::copysign(friction_dv, v_trial);
        b.velocity = v * axis;
        b.angular_velocity = 0.0;
        b.pose.position += b.velocity * dt;
        continue;
      }
      b.velocity += total / b.mass * dt;
      b.angular_velocity += body_torque_[bi] / b.inertia * dt;
      b.pose.position += b.velocity * dt;
      b.pose.angle += b.angular_velocity * dt;
    }
  }

  void finish() {
    scene_.anchors = std::move(anchors_);
    scene_.contacts = std::move(contacts_);
  }

 private:
  Scene& scene_;
  std::vector<FingerKinematics> kin_;
  std::vector<Vec2> body_force_;
  std::vector<double> body_torque_;
  std::vector<VecX> finger_force_;
  std::vector<std::vector<Vec2>> world_polys_;
  std::map<ContactKey, double> anchors_;
  std::vector<ContactRecord> contacts_;
};

void check_finite(const Scene& scene) {
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << "simulation diverged at step " << scene.step_index << ": " << what;
    throw SimulationDiverged(scene.step_index, os.str());
  };
  for (const auto& b : scene.bodies)
    if (!all_finite(b.pose.position) || !all_finite(b.velocity) || !std::isfinite(b.pose.angle) ||
        !std::isfinite(b.angular_velocity))
      fail("body '" + b.name + "'");
  for (size_t i = 0; i < scene.fingers.size(); ++i) {
    const auto& f = scene.fingers[i];
    if (!f.state.q.allFinite() || !f.state.qdot.allFinite() || !all_finite(f.wrench.force) ||
        !std::isfinite(f.wrench.moment))
      fail("finger " + std::to_string(i));
  }
}

}  // namespace

bool distal_to_sensor(const hand::FingerChain& chain, const VecX& q, int link, const Vec2& point) {
  const int s = chain.sensor_link();
  if (link > s) return true;
  if (link < s) return false;
  if (chain.sensor_offset == 0.0) return true;
  const Vec2 joint = hand::point_on_link(chain, q, s, 0.0);
  const Vec2 axis = unit(hand::link_angles(chain, q)[s]);
  return (point - joint).dot(axis) >= chain.sensor_offset;
}

Wrench aggregate_wrench(const Vec2& origin, std::span<const Vec2> points,
                        std::span<const Vec2> forces) {
  Wrench w;
  for (size_t i = 0; i < points.size(); ++i) {
    w.force += forces[i];
    w.moment += cross(points[i] - origin, forces[i]);
  }
  return w;
}

std::vector<Wrench> advance(Scene& scene, std::span<const VecX> torques) {
  if (torques.size() != scene.fingers.size())
    throw ContractViolation("step: one torque vector per finger required");
  for (size_t i = 0; i < torques.size(); ++i)
    if (torques[i].size() != scene.fingers[i].chain.num_joints())
      throw ContractViolation("step: torque dimension does not match finger " + std::to_string(i));
  StepContext ctx(scene);
  ctx.detect();
  ctx.apply_handles();
  auto wrenches = ctx.sense();
  ctx.integrate(torques);
  ctx.finish();
  check_finite(scene);
  ++scene.step_index;
  return wrenches;
}

StepOutput step(Scene scene, std::span<const VecX> torques) {
  auto wrenches = advance(scene, torques);
  return {std::move(scene), std::move(wrenches)};
}

Wrench sense_wrench(const Scene& scene, int finger_index) {
  if (finger_index < 0 || finger_index >= static_cast<int>(scene.fingers.size()))
    throw ContractViolation("sense_wrench: finger index out of range");
  return scene.fingers[finger_index].wrench;
}

void set_operator_handle(Scene& scene, int finger_index, const Vec2& handle_target,
                         double handle_stiffness, double handle_damping) {
  if (finger_index < 0 || finger_index >= static_cast<int>(scene.fingers.size()))
    throw ContractViolation("apply_operator_handle: finger index out of range");
  if (!(handle_stiffness > 0.0)) throw ContractViolation("handle stiffness must be positive");
  if (handle_damping < 0.0) throw ContractViolation("handle damping must be non-negative");
  if (!all_finite(handle_target)) throw ContractViolation("handle target must be finite");
  scene.fingers[finger_index].handle = Handle{handle_target, handle_stiffness, handle_damping};
}

Scene apply_operator_handle(Scene scene, int finger_index, const Vec2& handle_target,
                            double handle_stiffness, double handle_damping) {
  set_operator_handle(scene, finger_index, handle_target, handle_stiffness, handle_damping);
  return scene;
}

void release_operator_handle(Scene& scene, int finger_index) {
  scene.fingers.at(finger_index).handle.reset();
}

Vec2 handle_force(const Scene& scene, int finger_index) {
  const auto& f = scene.fingers.at(finger_index);
  if (!f.handle) return Vec2::Zero();
  const Vec2 grip = hand::grip_point(f.chain, f.state.q);
  const auto [link, along] = hand::grip_location(f.chain);
  const Vec2 v = hand::point_jacobian(f.chain, f.state.q, link, grip) * f.state.qdot;
  return f.handle->stiffness * (f.handle->target - grip) - f.handle->damping * v;
}

std::vector<VecX> gravity_compensation(const Scene& scene) {
  std::vector<VecX> out;
  out.reserve(scene.fingers.size());
  for (const auto& f : scene.fingers)
    out.push_back(hand::gravity_vector(f.chain, f.state.q, scene.gravity));
  return out;
}

Vec2 fingertip(const Scene& scene, int finger_index) {
  const auto& f = scene.fingers.at(finger_index);
  return hand::forward_kinematics(f.chain, f.state.q);
}

Vec2 fingertip_velocity(const Scene& scene, int finger_index) {
  const auto& f = scene.fingers.at(finger_index);
  return hand::jacobian(f.chain, f.state.q) * f.state.qdot;
}

double mechanical_energy(const Scene& scene) {
  double e = 0.0;
  for (const auto& b : scene.bodies) {
    if (b.is_static) continue;
    e += 0.5 * b.mass * b.velocity.squaredNorm() + 0.5 * b.inertia * b.angular_velocity * b.angular_velocity;
    e -= b.mass * scene.gravity.dot(b.pose.position);
  }
  for (const auto& f : scene.fingers) {
    e += hand::kinetic_energy(f.chain, f.state.q, f.state.qdot);
    e += hand::potential_energy(f.chain, f.state.q, scene.gravity);
  }
  return e;
}

void validate_scene(const Scene& scene) {
  validate_params(scene.contact);
  if (!(scene.dt > 0.0)) throw ContractViolation("scene dt must be positive");
  for (const auto& b : scene.bodies) {
    if (!b.is_static && !(b.mass > 0.0 && b.inertia > 0.0))
      throw ContractViolation("dynamic body '" + b.name + "' needs positive mass and inertia");
    if (const auto* p = std::get_if<Polygon>(&b.shape)) {
      if (p->vertices.size() < 3) throw ContractViolation("polygon '" + b.name + "' needs 3 vertices");
      for (size_t i = 0; i < p->vertices.size(); ++i) {
        const Vec2& a = p->vertices[i];
        const Vec2& c = p->vertices[(i + 1) % p->vertices.size()];
        const Vec2& d = p->vertices[(i + 2) % p->vertices.size()];
        if (cross(c - a, d - c) <= 0.0)
          throw ContractViolation("polygon '" + b.name + "' must be convex and counter-clockwise");
      }
    }
  }
  for (const auto& f : scene.fingers) {
    hand::validate_chain(f.chain);
    if (f.state.q.size() != f.chain.num_joints() || f.state.qdot.size() != f.chain.num_joints())
      throw ContractViolation("finger joint state does not match its chain");
  }
}

}  // namespace dexforge::sim
