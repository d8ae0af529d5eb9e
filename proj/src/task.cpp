#include "dexforge/task.hpp"

#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dexforge::sim {

bool PoseRegion::contains(double dx, double dy, double dangle) const {
  return dx >= x_lo && dx <= x_hi && dy >= y_lo && dy <= y_hi && dangle >= angle_lo &&
         dangle <= angle_hi;
}

double Predicate::param(const std::string& key) const {
  const auto it = params.find(key);
  if (it == params.end()) throw ContractViolation("predicate '" + rule + "' lacks parameter '" + key + "'");
  return it->second;
}

double TaskSpec::param(const std::string& key) const {
  const auto it = params.find(key);
  if (it == params.end()) throw ContractViolation("task '" + name + "' lacks parameter '" + key + "'");
  return it->second;
}

int TaskSpec::horizon_steps() const { return static_cast<int>(std::lround(horizon_s / scene.dt)); }

std::string to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success: return "success";
    case Outcome::Partial: return "partial";
    case Outcome::Failure: return "failure";
  }
  return "failure";
}

Outcome outcome_from_string(const std::string& text) {
  if (text == "success") return Outcome::Success;
  if (text == "partial") return Outcome::Partial;
  if (text == "failure") return Outcome::Failure;
  throw ContractViolation("unknown outcome '" + text + "'");
}

int body_index(const Scene& scene, const std::string& name) {
  for (size_t i = 0; i < scene.bodies.size(); ++i)
    if (scene.bodies[i].name == name) return static_cast<int>(i);
  throw ContractViolation("scene has no body named '" + name + "'");
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  // 53-bit mantissa from the raw 64-bit draw keeps sampling library-independent.
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + (hi - lo) * u;
}

}  // namespace

PoseOffset sample_offset(const TaskSpec& task, std::uint64_t seed) {
  const PoseRegion& region =
      task.ood_overrides && task.ood_overrides->region ? *task.ood_overrides->region : task.init.region;
  // OOD variants share the base task's offsets so seeds pair across variants
  std::string base = task.name;
  if (task.ood_overrides && base.ends_with("-ood")) base.resize(base.size() - 4);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull ^ name_hash(base));
  PoseOffset off;
  off.dx = uniform(rng, region.x_lo, region.x_hi);
  off.dy = uniform(rng, region.y_lo, region.y_hi);
  off.dangle = uniform(rng, region.angle_lo, region.angle_hi);
  return off;
}

Scene reset_task(const TaskSpec& task, std::uint64_t seed) {
  Scene scene = task.scene;
  const PoseOffset off = sample_offset(task, seed);
  for (const auto& name : task.init.bodies) {
    Body& b = scene.bodies[body_index(scene, name)];
    b.pose.position += Vec2(off.dx, off.dy);
    b.pose.angle += off.dangle;
  }
  if (task.ood_overrides) {
    for (const auto& [name, factor] : task.ood_overrides->mass_multiplier) {
      Body& b = scene.bodies[body_index(scene, name)];
      b.mass *= factor;
      b.inertia *= factor;
    }
  }
  validate_scene(scene);
  return scene;
}

namespace {

double wrapped_rotation(double from, double to) {
  return to - from;
}

// Average finger-on-surface normal force over [t0, t1] from the sensor history.
double window_force(const Trajectory& tr, int finger, double t0, double t1, const Vec2& push_dir) {
  double sum = 0.0;
  int n = 0;
  for (size_t k = 0; k < tr.times.size(); ++k) {
    if (tr.times[k] < t0 - 1e-9 || tr.times[k] > t1 + 1e-9) continue;
    sum += -tr.wrenches[k][finger].force.dot(push_dir);
    ++n;
  }
  return n ? sum / n : 0.0;
}

bool evaluate(const Predicate& p, const Trajectory& tr, std::map<std::string, double>& metrics) {
  if (p.rule == "never") return false;
  if (p.rule == "slide_goal" || p.rule == "slide_progress") {
    const int b = body_index(tr.final, p.body);
    const double x0 = tr.initial.bodies[b].pose.position.x();
    const double x = tr.final.bodies[b].pose.position.x();
    const double goal = p.param("goal_x");
    metrics["final_x"] = x;
    metrics["travel_fraction"] = (goal != x0) ? (x - x0) / (goal - x0) : 1.0;
    if (p.rule == "slide_goal") return std::abs(x - goal) <= p.param("tolerance");
    return metrics["travel_fraction"] >= p.param("fraction");
  }
  if (p.rule == "rotate") {
    const int b = body_index(tr.final, p.body);
    const double deg =
        std::abs(wrapped_rotation(tr.initial.bodies[b].pose.angle, tr.final.bodies[b].pose.angle)) * 180.0 / kPi;
    metrics["rotation_deg"] = deg;
    return deg >= p.param("min_deg") && deg < p.param("max_deg");
  }
  if (p.rule == "lift") {
    const int b = body_index(tr.final, p.body);
    const double lift = tr.final.bodies[b].pose.position.y() - tr.initial.bodies[b].pose.position.y();
    metrics["lift"] = lift;
    return lift >= p.param("min_height");
  }
  if (p.rule == "press_force" || p.rule == "press_contact") {
    const int finger = static_cast<int>(p.param("finger"));
    const double f = window_force(tr, finger, p.param("window_start"), p.param("window_end"), Vec2(0.0, -1.0));
    metrics["mean_force"] = f;
    if (p.rule == "press_contact") return f > p.param("threshold");
    const double target = p.param("target_force");
    metrics["force_error"] = (f - target) / target;
    return std::abs(f - target) <= p.param("tolerance") * target;
  }
  throw ContractViolation("unknown outcome rule '" + p.rule + "'");
}

}  // namespace

LabeledOutcome label_outcome(const TaskSpec& task, const Trajectory& trajectory) {
  LabeledOutcome out;
  const double duration = trajectory.final.time() - trajectory.initial.time();
  if (duration > task.horizon_s + 1e-9)
    throw ContractViolation("label_outcome: trajectory runs past the task horizon");
  if (trajectory.diverged) {
    out.metrics["diverged"] = 1.0;
    return out;
  }
  if (evaluate(task.success, trajectory, out.metrics)) {
    out.outcome = Outcome::Success;
  } else if (evaluate(task.partial, trajectory, out.metrics)) {
    out.outcome = Outcome::Partial;
  }
  return out;
}

hand::FingerChain standard_finger(const Vec2& base) {
  hand::FingerChain c;
  c.link_lengths = {0.07, 0.06};
  c.link_masses = {0.06, 0.08};
  c.link_com_offsets = {0.035, 0.042};
  c.joint_limits = {{-kPi, kPi}, {-2.6, 2.6}};
  c.base_pose = {base, -kPi / 2.0};
  c.sensor_link_index = 1;
  c.sensor_offset = 0.04;
  c.link_radius = 0.008;
  c.joint_damping = 0.002;
  return c;
}

namespace {

Finger make_finger(const Vec2& base, const Vec2& tip, double elbow_sign) {
  Finger f;
  f.chain = standard_finger(base);
  VecX seed(2);
  seed << 0.5 * elbow_sign, -1.0 * elbow_sign;
  const auto ik = hand::solve_ik(f.chain, tip, seed);
  if (!ik.converged) throw std::logic_error("built-in finger start pose is unreachable");
  f.state = hand::JointState::at_rest(ik.q);
  f.sensor_origin = hand::sensor_origin(f.chain, ik.q);
  return f;
}

Body table() {
  Body b;
  b.name = "table";
  b.shape = Polygon::box(0.4, 0.02);
  b.pose.position = {0.0, -0.01};
  b.is_static = true;
  b.mass = 0.0;
  b.inertia = 0.0;
  return b;
}

Body box_body(const std::string& name, double w, double h, double mass, const Vec2& center) {
  Body b;
  b.name = name;
  b.shape = Polygon::box(w, h);
  b.mass = mass;
  b.pose.position = center;
  set_uniform_inertia(b);
  return b;
}

TaskSpec press_hold() {
  TaskSpec t;
  t.name = "press-hold";
  t.description = "press the fingertip on the table and hold a target normal force";
  t.scene.bodies.push_back(table());
  t.scene.fingers.push_back(make_finger({0.0, 0.10}, {0.0, 0.055}, 1.0));
  t.params = {{"target_force", 1.0}, {"press_x", 0.0}, {"press_x_noise", 0.004},
              {"hold_start", 1.3}, {"hold_end", 3.3}, {"duration", 4.0}};
  t.success = {"press_force", "", {{"finger", 0}, {"target_force", 1.0}, {"tolerance", 0.1},
                                    {"window_start", 2.3}, {"window_end", 3.3}}};
  t.partial = {"press_contact", "", {{"finger", 0}, {"threshold", 0.55},
                                      {"window_start", 2.3}, {"window_end", 3.3}}};
  t.horizon_s = 4.5;
  return t;
}

TaskSpec slide_cube() {
  TaskSpec t;
  t.name = "slide-cube";
  t.description = "press on a rail-mounted cube and slide it into the goal interval";
  t.scene.bodies.push_back(table());
  Body cube = box_body("cube", 0.03, 0.03, 0.1, {-0.02, 0.0155});
  cube.rail = Rail{{1.0, 0.0}, 0.2};
  t.scene.bodies.push_back(cube);
  t.scene.fingers.push_back(make_finger({0.01, 0.14}, {-0.03, 0.075}, 1.0));
  t.init = {{"cube"}, {-0.01, 0.01, 0.0, 0.0, 0.0, 0.0}};
  t.params = {{"goal_x", 0.04}, {"press_force", 2.0}, {"duration", 4.3}};
  t.success = {"slide_goal", "cube", {{"goal_x", 0.04}, {"tolerance", 0.008}}};
  t.partial = {"slide_progress", "cube", {{"goal_x", 0.04}, {"fraction", 0.25}}};
  t.horizon_s = 6.0;
  t.ood_variant = OodOverrides{{{"cube", 3.0}}, std::nullopt};
  return t;
}

TaskSpec flip_box() {
  TaskSpec t;
  t.name = "flip-box";
  t.description = "two fingers push a standing box over its right bottom edge onto its side";
  t.scene.bodies.push_back(table());
  t.scene.bodies.push_back(box_body("box", 0.025, 0.05, 0.2, {0.0, 0.025}));
  t.scene.fingers.push_back(make_finger({-0.075, 0.13}, {-0.045, 0.065}, -1.0));
  t.scene.fingers.push_back(make_finger({-0.07, 0.105}, {-0.045, 0.04}, -1.0));
  t.init = {{"box"}, {-0.008, 0.008, 0.0, 0.0, 0.0, 0.0}};
  t.params = {{"push_height_0", 0.85}, {"push_height_1", 0.5}, {"push_angle_deg", 40.0},
              {"preload", 0.0015}, {"duration", 3.9}};
  t.success = {"rotate", "box", {{"min_deg", 85.0}, {"max_deg", 135.0}}};
  t.partial = {"rotate", "box", {{"min_deg", 30.0}, {"max_deg", 85.0}}};
  t.horizon_s = 5.0;
  t.ood_variant = OodOverrides{{{"box", 3.0}}, std::nullopt};
  return t;
}

TaskSpec pinch_lift() {
  TaskSpec t;
  t.name = "pinch-lift";
  t.description = "squeeze a thin upright plate between two fingers and lift it off the table";
  t.scene.bodies.push_back(table());
  t.scene.bodies.push_back(box_body("plate", 0.015, 0.05, 0.2, {0.0, 0.025}));
  t.scene.fingers.push_back(make_finger({-0.045, 0.13}, {-0.03, 0.065}, -1.0));
  t.scene.fingers.push_back(make_finger({0.045, 0.13}, {0.03, 0.065}, 1.0));
  t.init = {{"plate"}, {-0.008, 0.008, 0.0, 0.0, 0.0, 0.0}};
  t.params = {{"grasp_height", 0.022}, {"squeeze_force", 2.5}, {"lift_height", 0.035},
              {"duration", 4.2}};
  t.success = {"lift", "plate", {{"min_height", 0.02}}};
  t.partial = {"lift", "plate", {{"min_height", 0.005}}};
  t.horizon_s = 5.0;
  return t;
}

}  // namespace

std::vector<std::string> builtin_task_names() {
  return {"press-hold", "slide-cube", "flip-box", "pinch-lift"};
}

TaskSpec make_ood(TaskSpec task) {
  if (!task.ood_variant) throw ContractViolation("task '" + task.name + "' has no OOD variant");
  task.ood_overrides = task.ood_variant;
  task.name += "-ood";
  return task;
}

TaskSpec builtin_task(const std::string& name) {
  const std::string suffix = "-ood";
  if (name.size() > suffix.size() && name.ends_with(suffix))
    return make_ood(builtin_task(name.substr(0, name.size() - suffix.size())));
  if (name == "press-hold") return press_hold();
  if (name == "slide-cube") return slide_cube();
  if (name == "flip-box") return flip_box();
  if (name == "pinch-lift") return pinch_lift();
  throw ContractViolation("unknown task '" + name + "'");
}

}  // namespace dexforge::sim
