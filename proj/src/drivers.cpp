// Scripted kinesthetic demonstrators for the built-in tasks. Each driver
// plans fingertip waypoints, converts them to handle targets through IK at
// the grip point, and regulates contact force by stretching the handle
// along the push direction.

#include "dexforge/pipeline.hpp"
#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dexforge::pipeline {

namespace {

double clamp01(double u) { return std::clamp(u, 0.0, 1.0); }

double smooth(double u) {
  u = clamp01(u);
  return u * u * (3.0 - 2.0 * u);
}

double phase(double t, double t0, double t1) { return t1 > t0 ? clamp01((t - t0) / (t1 - t0)) : 1.0; }

Vec2 lerp(const Vec2& a, const Vec2& b, double u) { return a + (b - a) * u; }

class Noise {
 public:
  explicit Noise(std::uint64_t seed) : rng_(seed ^ 0xA24BAED4963EE407ull) {}
  double uniform(double half_width) {
    const double u = static_cast<double>(rng_() >> 11) * (1.0 / 9007199254740992.0);
    return half_width * (2.0 * u - 1.0);
  }

 private:
  std::mt19937_64 rng_;
};

/// Turns a fingertip waypoint and a push-force setpoint into a handle target.
class FingerServo {
 public:
  explicit FingerServo(int finger) : finger_(finger) {}

  Vec2 command(const sim::Scene& scene, const Vec2& tip, const Vec2& push_dir, double force_setpoint,
               double dt) {
    const auto& f = scene.fingers[finger_];
    if (q_plan_.size() == 0) q_plan_ = f.state.q;
    // Seed with the previous plan so the elbow branch never flips.
    const auto ik = hand::solve_ik(f.chain, tip, q_plan_);
    q_plan_ = ik.q;
    if (force_setpoint > 0.0) {
      const double measured = -f.wrench.force.dot(push_dir);
      stretch_ += kIntegralGain * (force_setpoint - measured) * dt;
      stretch_ = std::clamp(stretch_, -kMaxStretch, kMaxStretch);
    } else {
      stretch_ *= kReleaseDecay;
    }
    const double feedforward = force_setpoint / kHandleCompliance;
    return hand::grip_point(f.chain, q_plan_) + push_dir * (stretch_ + feedforward);
  }

 private:
  static constexpr double kIntegralGain = 0.01;     // m/(N*s)
  static constexpr double kHandleCompliance = 2000.0;
  static constexpr double kMaxStretch = 0.03;
  static constexpr double kReleaseDecay = 0.7;

  int finger_;
  VecX q_plan_;
  double stretch_{0.0};
};

class ScriptedDriver : public HandleDriver {
 public:
  ScriptedDriver(const sim::TaskSpec& task, std::uint64_t seed)
      : start_(sim::reset_task(task, seed)), noise_(seed) {
    for (int i = 0; i < static_cast<int>(start_.fingers.size()); ++i) {
      servos_.emplace_back(i);
      start_tips_.push_back(sim::fingertip(start_, i));
    }
  }

  std::string name() const override { return "scripted"; }

  std::optional<std::vector<std::optional<Vec2>>> next(const sim::Scene& scene, int tick) override {
    const double t = static_cast<double>(tick) / data::kRecordHz;
    if (t > duration() + 1e-9) return std::nullopt;
    std::vector<std::optional<Vec2>> out;
    for (size_t i = 0; i < servos_.size(); ++i) {
      const Plan p = plan(static_cast<int>(i), t, scene);
      out.push_back(servos_[i].command(scene, p.tip, p.dir, p.force, 1.0 / data::kRecordHz));
    }
    return out;
  }

 protected:
  struct Plan {
    Vec2 tip;
    Vec2 dir{0.0, -1.0};
    double force{0.0};
  };

  virtual double duration() const = 0;
  virtual Plan plan(int finger, double t, const sim::Scene& scene) = 0;

  double radius(int finger) const { return start_.fingers[finger].chain.link_radius; }
  const sim::Body& start_body(const std::string& name) const {
    return start_.bodies[sim::body_index(start_, name)];
  }

  sim::Scene start_;
  Noise noise_;
  std::vector<FingerServo> servos_;
  std::vector<Vec2> start_tips_;
};

// Approach, touch down, ramp to the force setpoint, hold, release, lift.
class PressDriver final : public ScriptedDriver {
 public:
  PressDriver(const sim::TaskSpec& task, std::uint64_t seed) : ScriptedDriver(task, seed) {
    x_ = task.param("press_x") + noise_.uniform(task.param("press_x_noise"));
    hover_ = 0.025 + noise_.uniform(0.002);
    force_ = task.param("target_force");
    hold_start_ = task.param("hold_start");
    hold_end_ = task.param("hold_end");
    duration_ = task.param("duration");
  }

 protected:
  double duration() const override { return duration_; }

  Plan plan(int finger, double t, const sim::Scene&) override {
    const double contact_y = radius(finger);
    const Vec2 hover(x_, hover_);
    const Vec2 touch(x_, contact_y);
    const double release_end = hold_end_ + 0.3;
    Plan p;
    if (t <= 0.5) {
      p.tip = lerp(start_tips_[finger], hover, smooth(phase(t, 0.0, 0.5)));
    } else if (t <= 0.9) {
      p.tip = lerp(hover, touch, smooth(phase(t, 0.5, 0.9)));
    } else if (t <= release_end) {
      p.tip = touch;
      if (t <= hold_start_) p.force = force_ * phase(t, 0.9, hold_start_);
      else if (t <= hold_end_) p.force = force_;
      else p.force = force_ * (1.0 - phase(t, hold_end_, release_end));
    } else {
      p.tip = lerp(touch, Vec2(x_, 0.04), smooth(phase(t, release_end, duration_)));
    }
    return p;
  }

 private:
  double x_, hover_, force_, hold_start_, hold_end_, duration_;
};

// Press on the cube near its left edge, drag it to the goal, settle on the
// measured cube position, then release and lift.
class SlideDriver final : public ScriptedDriver {
 public:
  SlideDriver(const sim::TaskSpec& task, std::uint64_t seed) : ScriptedDriver(task, seed) {
    const auto& cube = start_body("cube");
    cube_x0_ = cube.pose.position.x();
    const auto& box = std::get<sim::Polygon>(cube.shape);
    double top = -1e9, left = 1e9;
    for (const auto& v : box.vertices) {
      top = std::max(top, v.y());
      left = std::min(left, v.x());
    }
    top_ = cube.pose.position.y() + top;
    press_x_ = cube_x0_ + left + 0.008 + noise_.uniform(0.001);
    force_ = task.param("press_force") * (1.0 + noise_.uniform(0.05));
    goal_ = task.param("goal_x");
    duration_ = task.param("duration");
  }

 protected:
  double duration() const override { return duration_; }

  Plan plan(int finger, double t, const sim::Scene& scene) override {
    const double y = top_ + radius(finger);
    const Vec2 above(press_x_, y + 0.015);
    const double travel = goal_ - cube_x0_;
    Plan p;
    if (t <= 0.6) {
      p.tip = lerp(start_tips_[finger], above, smooth(phase(t, 0.0, 0.6)));
    } else if (t <= 1.0) {
      p.tip = lerp(above, Vec2(press_x_, y), smooth(phase(t, 0.6, 1.0)));
    } else if (t <= 1.3) {
      p.tip = {press_x_, y};
      p.force = force_ * phase(t, 1.0, 1.3);
    } else if (t <= 3.3) {
      p.tip = {press_x_ + travel * smooth(phase(t, 1.3, 3.3)), y};
      p.force = force_;
    } else if (t <= 3.8) {
      const double cube_x = scene.bodies[sim::body_index(scene, "cube")].pose.position.x();
      settle_x_ = goal_ + (sim::fingertip(scene, finger).x() - cube_x);
      p.tip = {settle_x_, y};
      p.force = force_;
    } else if (t <= 4.0) {
      p.tip = {settle_x_, y};
      p.force = force_ * (1.0 - phase(t, 3.8, 4.0));
    } else {
      p.tip = lerp(Vec2(settle_x_, y), Vec2(settle_x_, y + 0.025), smooth(phase(t, 4.0, duration_)));
    }
    return p;
  }

 private:
  double cube_x0_, top_, press_x_, force_, goal_, duration_;
  double settle_x_{0.0};
};

// Two fingers push the left face of the box, following the face as it
// rotates about its right bottom edge, until it passes the tipping angle.
class FlipDriver final : public ScriptedDriver {
 public:
  FlipDriver(const sim::TaskSpec& task, std::uint64_t seed) : ScriptedDriver(task, seed) {
    const auto& box = start_body("box");
    const auto& poly = std::get<sim::Polygon>(box.shape);
    double w = 0.0, h = 0.0;
    for (const auto& v : poly.vertices) {
      w = std::max(w, 2.0 * std::abs(v.x()));
      h = std::max(h, 2.0 * std::abs(v.y()));
    }
    width_ = w;
    pivot_ = box.pose.position + Vec2(w / 2.0, -h / 2.0);
    heights_ = {h * task.param("push_height_0") + noise_.uniform(0.001),
                h * task.param("push_height_1") + noise_.uniform(0.001)};
    max_angle_ = task.param("push_angle_deg") * kPi / 180.0;
    preload_ = task.param("preload");
    duration_ = task.param("duration");
  }

 protected:
  double duration() const override { return duration_; }

  // Tip centre `gap` outside the left face at height s when the box has
  // rotated by theta (clockwise).
  Vec2 face_tip(double s, double theta, double gap) const {
    const double c = std::cos(theta), sn = std::sin(theta);
    const Vec2 point = pivot_ + Vec2(-width_ * c + s * sn, width_ * sn + s * c);
    const Vec2 normal(-c, sn);
    return point + normal * gap;
  }

  Plan plan(int finger, double t, const sim::Scene&) override {
    const double s = heights_[finger];
    const double r = radius(finger);
    Plan p;
    if (t <= 0.6) {
      p.tip = lerp(start_tips_[finger], face_tip(s, 0.0, r + 0.01), smooth(phase(t, 0.0, 0.6)));
    } else if (t <= 1.0) {
      p.tip = lerp(face_tip(s, 0.0, r + 0.01), face_tip(s, 0.0, r - preload_), smooth(phase(t, 0.6, 1.0)));
    } else if (t <= 2.6) {
      p.tip = face_tip(s, max_angle_ * smooth(phase(t, 1.0, 2.6)), r - preload_);
    } else {
      const Vec2 from = face_tip(s, max_angle_, r - preload_);
      const Vec2 away = face_tip(s, max_angle_, r + 0.02) + Vec2(-0.01, 0.015);
      p.tip = lerp(from, away, smooth(phase(t, 2.6, 3.1)));
    }
    return p;
  }

 private:
  double width_{0.0};
  Vec2 pivot_{Vec2::Zero()};
  std::vector<double> heights_;
  double max_angle_, preload_, duration_;
};

// Close on the plate from both sides, squeeze, lift and hold.
class PinchDriver final : public ScriptedDriver {
 public:
  PinchDriver(const sim::TaskSpec& task, std::uint64_t seed) : ScriptedDriver(task, seed) {
    const auto& plate = start_body("plate");
    double half = 0.0;
    for (const auto& v : std::get<sim::Polygon>(plate.shape).vertices) half = std::max(half, std::abs(v.x()));
    half_width_ = half;
    plate_x_ = plate.pose.position.x();
    grasp_y_ = task.param("grasp_height") + noise_.uniform(0.001);
    force_ = task.param("squeeze_force") * (1.0 + noise_.uniform(0.05));
    lift_ = task.param("lift_height");
    duration_ = task.param("duration");
  }

 protected:
  double duration() const override { return duration_; }

  Plan plan(int finger, double t, const sim::Scene&) override {
    const double side = finger == 0 ? -1.0 : 1.0;
    const double contact_x = plate_x_ + side * (half_width_ + radius(finger));
    const Vec2 pre(contact_x + side * 0.012, grasp_y_);
    const Vec2 touch(contact_x, grasp_y_);
    Plan p;
    p.dir = {-side, 0.0};
    if (t <= 0.6) {
      p.tip = lerp(start_tips_[finger], pre, smooth(phase(t, 0.0, 0.6)));
    } else if (t <= 1.0) {
      p.tip = lerp(pre, touch, smooth(phase(t, 0.6, 1.0)));
    } else {
      p.tip = touch + Vec2(0.0, lift_ * smooth(phase(t, 1.8, 3.3)));
      p.force = force_ * phase(t, 1.0, 1.5);
    }
    return p;
  }

 private:
  double half_width_, plate_x_, grasp_y_, force_, lift_, duration_;
};

}  // namespace

std::unique_ptr<HandleDriver> make_scripted_driver(const sim::TaskSpec& task, std::uint64_t seed) {
  std::string base = task.name;
  if (base.ends_with("-ood")) base.resize(base.size() - 4);
  if (base == "press-hold") return std::make_unique<PressDriver>(task, seed);
  if (base == "slide-cube") return std::make_unique<SlideDriver>(task, seed);
  if (base == "flip-box") return std::make_unique<FlipDriver>(task, seed);
  if (base == "pinch-lift") return std::make_unique<PinchDriver>(task, seed);
  throw ContractViolation("no scripted driver for task '" + task.name + "'");
}

}  // namespace dexforge::pipeline
