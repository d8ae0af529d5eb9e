#include "oracles.hpp"

#include "dexforge/impedance.hpp"
#include "dexforge/simulator.hpp"

#include <doctest.h>

#include <random>

using namespace dexforge;

namespace {

// Steps the scene one physics step at a time toward a held target and
// returns the fingertip after each step.
std::vector<Vec2> track_fine(sim::Scene& s, const Vec2& target, const control::ImpedanceGains& gains,
                             int steps) {
  std::vector<Vec2> tips;
  for (int k = 0; k < steps; ++k) {
    control::run_control_period(s, {0}, {target}, gains, 1);
    tips.push_back(sim::fingertip(s, 0));
  }
  return tips;
}

}  // namespace

TEST_CASE("control force examples") {
  const control::ImpedanceGains g{220.0, 0.0};
  CHECK(control::control_force(g, {0.3, 0.1}, {0.3, 0.1}, Vec2::Zero()) == Vec2::Zero());
  const Vec2 f = control::control_force(g, {0.01, 0.0}, Vec2::Zero(), Vec2::Zero());
  CHECK(f.x() == doctest::Approx(2.2).epsilon(1e-15));
  CHECK(f.y() == 0.0);
  const Vec2 d = control::control_force({220.0, 1.0}, {0.2, 0.0}, {0.2, 0.0}, {0.5, 0.0});
  CHECK(d == Vec2(-0.5, 0.0));
}

TEST_CASE("control force is affine and doubles with the error") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.1, 0.1), k(1.0, 800.0);
  for (int trial = 0; trial < 200; ++trial) {
    const control::ImpedanceGains g{k(rng), k(rng) / 50};
    const Vec2 xc{u(rng), u(rng)}, e{u(rng), u(rng)}, v{u(rng), u(rng)};
    const Vec2 f1 = control::control_force(g, xc + e, xc, Vec2::Zero());
    const Vec2 f2 = control::control_force(g, xc + 2 * e, xc, Vec2::Zero());
    CHECK((f2 - 2 * f1).norm() <= 1e-12 * f1.norm() + 1e-15);
    const Vec2 fv = control::control_force(g, xc + e, xc, v);
    CHECK((fv - (f1 - g.kv * v)).norm() < 1e-12);
  }
}

TEST_CASE("gain validation and defaults") {
  CHECK_THROWS_AS(control::validate_gains({0.0, 1.0}), ContractViolation);
  CHECK_THROWS_AS(control::validate_gains({220.0, -1.0}), ContractViolation);
  CHECK_NOTHROW(control::validate_gains({220.0, 0.0}));
  const auto d = control::default_gains();
  CHECK(d.kp == 220.0);
  CHECK(d.kv == doctest::Approx(2.0 * std::sqrt(220.0 * 0.05)));
}

TEST_CASE("joint torques examples") {
  MatX J(2, 1);
  J << 0.0, 0.1;
  VecX g = VecX::Zero(1);
  CHECK(control::joint_torques(J, {0.0, 1.0}, g)[0] == doctest::Approx(0.1).epsilon(1e-15));
  g[0] = 0.37;
  CHECK(control::joint_torques(J, Vec2::Zero(), g) == g);
  CHECK_THROWS_AS(control::joint_torques(J, Vec2::Zero(), VecX::Zero(2)), ContractViolation);
  CHECK_THROWS_AS(control::joint_torques(MatX::Zero(3, 1), Vec2::Zero(), VecX::Zero(1)), ContractViolation);
}

TEST_CASE("joint torques match an elementwise oracle") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> n(1, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const int dofs = n(rng);
    MatX J(2, dofs);
    VecX g(dofs);
    for (int j = 0; j < dofs; ++j) {
      J(0, j) = u(rng);
      J(1, j) = u(rng);
      g[j] = u(rng);
    }
    const Vec2 F{u(rng), u(rng)};
    CHECK((control::joint_torques(J, F, g) - oracle::jt_f_plus_g(J, F, g)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("substeps per control tick") {
  sim::Scene s;
  CHECK(control::substeps_per_tick(s, 30) == 20);
  CHECK(control::substeps_per_tick(s, 600) == 1);
  CHECK_THROWS_AS(control::substeps_per_tick(s, 7), ContractViolation);
  CHECK_THROWS_AS(control::substeps_per_tick(s, 0), ContractViolation);
}

TEST_CASE("tracking rejects malformed target sets") {
  const auto s = oracle::finger_scene();
  const auto g = control::default_gains();
  const Vec2 tip = sim::fingertip(s, 0);
  CHECK_THROWS_AS(control::track_trajectory(s, {0}, {}, g), ContractViolation);
  CHECK_THROWS_AS(control::track_trajectory(s, {1}, {{tip}}, g), ContractViolation);
  CHECK_THROWS_AS(control::track_trajectory(s, {0, 0}, {{tip, tip}, {tip}}, g), ContractViolation);
  CHECK_THROWS_AS(control::track_trajectory(s, {0}, {{tip}}, {0.0, 1.0}), ContractViolation);
}

TEST_CASE("free-space step response settles without overshoot") {
  // 1 cm straight up would fold the finger past its second joint limit
  for (const Vec2& dir : {Vec2(1, 0), Vec2(-1, 0), Vec2(0, -1), Vec2(std::sqrt(0.5), -std::sqrt(0.5))}) {
    auto s = oracle::finger_scene();
    const Vec2 start = sim::fingertip(s, 0);
    const Vec2 target = start + 0.01 * dir;
    const auto tips = track_fine(s, target, control::default_gains(), 600);
    // last step outside the 2% band, and the largest excursion past the target
    int last_out = -1;
    double overshoot = 0.0;
    for (int k = 0; k < static_cast<int>(tips.size()); ++k) {
      if ((tips[k] - target).norm() > 0.02 * 0.01) last_out = k;
      overshoot = std::max(overshoot, (tips[k] - start).dot(dir) - 0.01);
    }
    const double settle = (last_out + 1) * s.dt;
    INFO("direction " << dir.transpose() << " settle " << settle << " overshoot " << overshoot);
    CHECK(settle < 0.5);
    CHECK(overshoot < 0.1 * 0.01);
  }
}

TEST_CASE("constant target at the rest pose holds the fingertip") {
  auto s = oracle::finger_scene();
  const Vec2 start = sim::fingertip(s, 0);
  const auto r = control::track_trajectory(s, {0}, {std::vector<Vec2>(600, start)}, control::default_gains());
  double worst = 0.0;
  for (const auto& t : r.ticks) worst = std::max(worst, (t.tips[0] - start).norm());
  CHECK(worst < 1e-5);
}

TEST_CASE("kinetic energy decays under a constant target in free space") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> off(-0.02, 0.02), vel(-3.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    auto s = oracle::finger_scene();
    for (int j = 0; j < 2; ++j) s.fingers[0].state.qdot[j] = vel(rng);
    const Vec2 target = sim::fingertip(s, 0) + Vec2(off(rng), off(rng));
    const auto& chain = s.fingers[0].chain;
    const double ke0 = hand::kinetic_energy(chain, s.fingers[0].state.q, s.fingers[0].state.qdot);
    track_fine(s, target, control::default_gains(), 1800);
    const double ke = hand::kinetic_energy(chain, s.fingers[0].state.q, s.fingers[0].state.qdot);
    CHECK(ke < 1e-10 * std::max(1.0, ke0));
    CHECK((sim::fingertip(s, 0) - target).norm() < 1e-6);
  }
}

TEST_CASE("target behind a wall gives the series spring force") {
  // 1 cm behind a 1e4 N/m wall at kp = 220: 215.3 N/m * 0.01 m
  SUBCASE("reference example") {
    double surface = 0.0;
    const auto s = oracle::wall_scene(1e4, 0.003, &surface);
    const double r = s.fingers[0].chain.link_radius;
    const Vec2 target(sim::fingertip(s, 0).x(), surface + r - 0.01);
    const auto res = control::track_trajectory(s, {0}, {std::vector<Vec2>(60, target)}, control::default_gains());
    const double f = res.ticks.back().wrenches[0].force.y();
    CHECK(oracle::series_spring(220, 1e4, 0.01) == doctest::Approx(2.153).epsilon(1e-3));
    CHECK(f == doctest::Approx(oracle::series_spring(220, 1e4, 0.01)).epsilon(0.05));
  }
  SUBCASE("sweep of gains and depths") {
    for (double k_n : {1e4, 2e4})
      for (double kp : {100.0, 220.0, 500.0})
        for (double d : {0.002, 0.005, 0.01, 0.02}) {
          double surface = 0.0;
          const auto s = oracle::wall_scene(k_n, 0.003, &surface);
          const double r = s.fingers[0].chain.link_radius;
          const Vec2 target(sim::fingertip(s, 0).x(), surface + r - d);
          const auto res = control::track_trajectory(s, {0}, {std::vector<Vec2>(60, target)},
                                                     control::ImpedanceGains::critically_damped(kp));
          const auto& w = res.ticks.back().wrenches[0];
          const double expect = oracle::series_spring(kp, k_n, d);
          INFO("k_n " << k_n << " kp " << kp << " d " << d << " force " << w.force.transpose());
          CHECK(w.force.y() == doctest::Approx(expect).epsilon(0.05));
          // sideways drift on the way in is held by sticking friction
          CHECK(std::abs(w.force.x()) <= s.contact.mu * w.force.y());
        }
  }
}

TEST_CASE("tracking records one tick per target sample") {
  const auto s = oracle::finger_scene();
  const Vec2 tip = sim::fingertip(s, 0);
  std::vector<int> seen;
  const auto r = control::track_trajectory(s, {0}, {std::vector<Vec2>(7, tip)}, control::default_gains(), {},
                                           [&](int tick, const sim::Scene& sc) {
                                             seen.push_back(tick);
                                             CHECK(sc.step_index == 20 * tick);
                                           });
  CHECK(r.ticks.size() == 7);
  CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  CHECK(r.final_scene.step_index == 120);
}
