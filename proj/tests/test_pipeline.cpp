#include "oracles.hpp"

#include "dexforge/pipeline.hpp"
#include "dexforge/simulator.hpp"
#include "dexforge/task_io.hpp"

#include <doctest.h>

#include <random>

using namespace dexforge;

namespace {

sim::TaskSpec press_at(double force) {
  auto t = sim::builtin_task("press-hold");
  sim::set_param(t, "target_force", force);
  return t;
}

// Mean normal force over the press-hold judging window.
double hold_force(const data::Demonstration& d) { return oracle::window_normal_force(d, 0, 2.3, 3.3); }

sim::TaskSpec free_space_task() {
  sim::TaskSpec t;
  t.name = "free-space";
  t.scene = oracle::finger_scene();
  t.horizon_s = 2.0;
  return t;
}

data::Demonstration synthetic_kinesthetic(std::mt19937_64& rng, int frames, int fingers) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  data::Demonstration d;
  d.header.task = "synthetic";
  d.header.finger_count = fingers;
  d.header.source = "synthetic";
  for (int k = 0; k < frames; ++k) {
    data::Frame f;
    f.tick = k;
    for (int i = 0; i < fingers; ++i) {
      data::FingerSample s;
      s.x = {u(rng) / 30, u(rng) / 30};
      s.q = VecX::Zero(2);
      s.wrench.force = {u(rng), u(rng)};
      s.wrench.moment = u(rng) / 100;
      f.fingers.push_back(s);
    }
    d.frames.push_back(f);
  }
  return d;
}

}  // namespace

TEST_CASE("force informed target examples") {
  const pipeline::ExtractionConfig cfg;
  CHECK(cfg.kf == 1.0 / 220.0);
  const Vec2 xo(0.01, 0.03);
  CHECK(pipeline::force_informed_target(xo, {}, cfg) == xo);
  sim::Wrench pressing;
  pressing.force = {0.0, 2.2};
  pressing.moment = 5.0;  // ignored
  const Vec2 xf = pipeline::force_informed_target(xo, pressing, cfg);
  CHECK(xf.x() == xo.x());
  CHECK(xf.y() == doctest::Approx(xo.y() - 0.01).epsilon(1e-14));
}

TEST_CASE("extraction config validation") {
  CHECK_THROWS_AS((pipeline::ExtractionConfig{0.0, 1}.validate()), ContractViolation);
  CHECK_THROWS_AS((pipeline::ExtractionConfig{-1.0, 1}.validate()), ContractViolation);
  CHECK_THROWS_AS((pipeline::ExtractionConfig{0.01, 0}.validate()), ContractViolation);
  std::mt19937_64 rng(31);
  auto d = synthetic_kinesthetic(rng, 0, 1);
  CHECK_THROWS_AS(pipeline::extract_stage1(d, {}), ContractViolation);
  d = synthetic_kinesthetic(rng, 3, 1);
  d.header.stage = data::Stage::Replay;
  CHECK_THROWS_AS(pipeline::extract_stage1(d, {}), ContractViolation);
}

TEST_CASE("zero force demonstrations extract to the observed positions") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = synthetic_kinesthetic(rng, 1 + trial, 1 + trial % 3);
    for (auto& f : d.frames)
      for (auto& s : f.fingers) s.wrench = {};
    const auto tr = pipeline::extract_stage1(d, {});
    REQUIRE(tr.targets.size() == static_cast<size_t>(d.header.finger_count));
    for (size_t i = 0; i < tr.targets.size(); ++i)
      for (size_t k = 0; k < d.frames.size(); ++k) CHECK(tr.targets[i][k] == d.frames[k].fingers[i].x);
  }
}

TEST_CASE("extraction is frame-wise and linear in the force") {
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> kf(1e-4, 0.05), scale(-4.0, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = synthetic_kinesthetic(rng, 40, 3);
    const pipeline::ExtractionConfig cfg{kf(rng), 1};
    const auto tr = pipeline::extract_stage1(d, cfg);
    CHECK(tr.length() == d.frames.size());
    CHECK(tr.kf == cfg.kf);
    for (size_t i = 0; i < 3; ++i)
      for (size_t k = 0; k < d.frames.size(); ++k) {
        const auto& s = d.frames[k].fingers[i];
        const Vec2 expect(s.x.x() - cfg.kf * s.wrench.force.x(), s.x.y() - cfg.kf * s.wrench.force.y());
        CHECK(tr.targets[i][k] == expect);
      }

    // scaling every force by alpha scales the offsets by alpha; alpha = 2^n is exact
    const double alpha = std::ldexp(1.0, static_cast<int>(scale(rng)));
    auto scaled = d;
    for (auto& f : scaled.frames)
      for (auto& s : f.fingers) s.wrench.force *= alpha;
    const auto ts = pipeline::extract_stage1(scaled, cfg);
    for (size_t i = 0; i < 3; ++i)
      for (size_t k = 0; k < d.frames.size(); ++k) {
        const Vec2 o1 = tr.targets[i][k] - d.frames[k].fingers[i].x;
        const Vec2 o2 = ts.targets[i][k] - d.frames[k].fingers[i].x;
        CHECK((o2 - alpha * o1).norm() <= 1e-12 * (1.0 + o2.norm()));
      }
  }
}

TEST_CASE("optional moving average filter is causal") {
  std::mt19937_64 rng(34);
  const auto d = synthetic_kinesthetic(rng, 12, 1);
  const pipeline::ExtractionConfig cfg{0.01, 4};
  const auto tr = pipeline::extract_stage1(d, cfg);
  for (size_t k = 0; k < d.frames.size(); ++k) {
    Vec2 sum = Vec2::Zero();
    int n = 0;
    for (size_t j = (k >= 3 ? k - 3 : 0); j <= k; ++j, ++n) sum += d.frames[j].fingers[0].wrench.force;
    const Vec2 expect = d.frames[k].fingers[0].x - cfg.kf * sum / n;
    CHECK((tr.targets[0][k] - expect).norm() < 1e-15);
  }
}

TEST_CASE("target files round trip") {
  std::mt19937_64 rng(35);
  const auto d = synthetic_kinesthetic(rng, 25, 2);
  auto tr = pipeline::extract_stage1(d, {1.0 / 3.0, 2});
  tr.seed = 0xfedcba9876543210ull;
  const auto back = pipeline::trajectory_from_json(pipeline::trajectory_to_json(tr));
  CHECK(back.source_id == tr.source_id);
  CHECK(back.task == tr.task);
  CHECK(back.seed == tr.seed);
  CHECK(back.kf == tr.kf);
  CHECK(back.filter_window == 2);
  CHECK(back.record_hz == tr.record_hz);
  CHECK(back.targets == tr.targets);
  CHECK(pipeline::trajectory_file_name(tr) == "synthetic-targets-seed18364758544493064720.targets.json");
  CHECK(pipeline::trajectory_to_json(back) == pipeline::trajectory_to_json(tr));
  CHECK_THROWS(pipeline::trajectory_from_json("{\"format_version\": 2}"));
}

TEST_CASE("stationary and dragged fingers in free space sense nothing") {
  const auto task = free_space_task();
  const auto scene = sim::reset_task(task, 0);
  const auto& f = scene.fingers[0];
  const auto [link, along] = hand::grip_location(f.chain);
  const Vec2 grip = hand::point_on_link(f.chain, f.state.q, link, along);
  std::vector<std::vector<std::optional<Vec2>>> still, drag;
  for (int k = 0; k < 60; ++k) {
    still.push_back({grip});
    drag.push_back({grip + std::min(k, 20) / 20.0 * Vec2(0.02, -0.015)});
  }
  for (auto* seq : {&still, &drag}) {
    pipeline::SequenceDriver driver(*seq);
    const auto demo = pipeline::record_kinesthetic(task, 0, driver);
    CHECK(demo.frames.size() == 60);
    for (const auto& fr : demo.frames) CHECK(fr.fingers[0].wrench.is_zero());
  }
  pipeline::SequenceDriver driver(drag);
  const auto demo = pipeline::record_kinesthetic(task, 0, driver);
  CHECK((demo.frames.back().fingers[0].x - demo.frames.front().fingers[0].x).norm() > 0.015);
}

TEST_CASE("scripted press holds its setpoint") {
  for (std::uint64_t seed : {1000u, 1001u, 1002u}) {
    auto driver = pipeline::make_scripted_driver(press_at(1.0), seed);
    const auto demo = pipeline::record_kinesthetic(press_at(1.0), seed, *driver);
    CHECK(data::validate(demo).empty());
    for (const auto& fr : demo.frames) {
      const double t = fr.tick / 30.0;
      if (t < 2.3 || t > 3.3) continue;
      INFO("seed " << seed << " t " << t);
      CHECK(fr.fingers[0].wrench.force.y() == doctest::Approx(1.0).epsilon(0.05));
    }
  }
}

TEST_CASE("press targets move deeper in proportion to the force") {
  std::vector<double> offsets;
  const pipeline::ExtractionConfig cfg;
  for (double force : {0.5, 1.0, 2.0}) {
    const auto task = press_at(force);
    auto driver = pipeline::make_scripted_driver(task, 1000);
    const auto demo = pipeline::record_kinesthetic(task, 1000, *driver);
    const auto tr = pipeline::extract_stage1(demo, cfg);
    double sum = 0.0;
    int n = 0;
    for (size_t k = 0; k < demo.frames.size(); ++k) {
      const double t = demo.time(k);
      if (t < 2.3 || t > 3.3) continue;
      const double off = demo.frames[k].fingers[0].x.y() - tr.targets[0][k].y();
      // recomputed per frame from the sensed force
      CHECK(off == doctest::Approx(cfg.kf * demo.frames[k].fingers[0].wrench.force.y()).epsilon(1e-9));
      sum += off;
      ++n;
    }
    offsets.push_back(sum / n);
  }
  CHECK(offsets[0] > 0.0);
  CHECK(offsets[0] == doctest::Approx(0.5 / 220).epsilon(0.05));
  CHECK(offsets[1] / offsets[0] == doctest::Approx(2.0).epsilon(0.05));
  CHECK(offsets[2] / offsets[0] == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("replay reproduces the recorded press force") {
  for (double force : {0.5, 1.0, 2.0, 5.0}) {
    const auto task = press_at(force);
    const auto r = pipeline::run_pipeline(task, 1000, {}, control::default_gains());
    const double recorded = hold_force(r.kinesthetic);
    const double replayed = hold_force(r.replay);
    INFO("setpoint " << force << " recorded " << recorded << " replayed " << replayed);
    CHECK(replayed == doctest::Approx(force).epsilon(0.10));
    CHECK(replayed == doctest::Approx(oracle::coupled_replay_force(recorded, 220, task.scene.contact.k_n, 1.0))
                          .epsilon(0.05));
    CHECK(pipeline::demo_outcome(r.replay) == sim::Outcome::Success);
  }
}

TEST_CASE("replaying the observed positions barely touches the surface") {
  const auto task = press_at(1.0);
  auto driver = pipeline::make_scripted_driver(task, 1000);
  const auto demo = pipeline::record_kinesthetic(task, 1000, *driver);
  const auto naive = pipeline::replay_stage2(task, 1000, pipeline::observed_trajectory(demo), control::default_gains());
  CHECK(oracle::peak_force(naive) < 0.1);
  CHECK_FALSE(naive.header.extraction.has_value());
  CHECK(pipeline::demo_outcome(naive) != sim::Outcome::Success);
}

TEST_CASE("replayed force scales with the stiffness product") {
  const auto task = press_at(2.0);
  auto driver = pipeline::make_scripted_driver(task, 1001);
  const auto demo = pipeline::record_kinesthetic(task, 1001, *driver);
  const double recorded = hold_force(demo);
  double previous = 0.0;
  for (double c : {0.5, 1.0, 2.0}) {
    const auto tr = pipeline::extract_stage1(demo, {c / 220.0, 1});
    const auto replay = pipeline::replay_stage2(task, 1001, tr, control::default_gains());
    const double f = hold_force(replay);
    INFO("c " << c << " recorded " << recorded << " replayed " << f);
    CHECK(f == doctest::Approx(c * recorded).epsilon(0.15));
    CHECK(f == doctest::Approx(oracle::coupled_replay_force(recorded, 220, task.scene.contact.k_n, c)).epsilon(0.05));
    CHECK(f > previous);
    previous = f;
  }
}

TEST_CASE("replay is time-locked to the recording") {
  for (const auto& name : {"press-hold", "slide-cube"}) {
    const auto task = sim::builtin_task(name);
    const auto r = pipeline::run_pipeline(task, 1003, {}, control::default_gains());
    REQUIRE(r.replay.frames.size() == r.kinesthetic.frames.size());
    CHECK(r.trajectory.length() == r.kinesthetic.frames.size());
    CHECK(r.replay.header.stage == data::Stage::Replay);
    CHECK(r.replay.header.seed == 1003);
    CHECK(r.replay.header.extraction == data::ExtractionInfo{1.0 / 220.0, 1});
    CHECK(data::validate(r.replay).empty());
    for (size_t k = 0; k < r.replay.frames.size(); ++k) {
      const auto& fr = r.replay.frames[k];
      CHECK(fr.tick == r.kinesthetic.frames[k].tick);
      REQUIRE(fr.image.has_value());
      CHECK(fr.image->width == r.replay.header.image_width);
      CHECK(fr.image->height == r.replay.header.image_height);
      for (size_t i = 0; i < fr.fingers.size(); ++i) {
        CHECK_FALSE(fr.fingers[i].handle.has_value());
        REQUIRE(fr.fingers[i].executed_target.has_value());
        CHECK(*fr.fingers[i].executed_target == r.trajectory.targets[i][k]);
      }
    }
  }
}

TEST_CASE("replay starts from the same reset state as the recording") {
  const auto task = sim::builtin_task("slide-cube");
  const auto r = pipeline::run_pipeline(task, 1004, {}, control::default_gains());
  const auto& a = r.kinesthetic.frames.front().fingers[0];
  const auto& b = r.replay.frames.front().fingers[0];
  CHECK(a.x == b.x);
  CHECK(a.q == b.q);
}

TEST_CASE("slide cube pipeline succeeds") {
  const auto task = sim::builtin_task("slide-cube");
  for (std::uint64_t seed : {1000u, 1007u}) {
    const auto r = pipeline::run_pipeline(task, seed, {}, control::default_gains());
    CHECK(r.kinesthetic.header.outcome == "success");
    CHECK(pipeline::demo_outcome(r.replay) == sim::Outcome::Success);
  }
}

TEST_CASE("pipeline runs are deterministic") {
  const auto task = sim::builtin_task("flip-box");
  const auto a = pipeline::run_pipeline(task, 1010, {}, control::default_gains());
  const auto b = pipeline::run_pipeline(task, 1010, {}, control::default_gains());
  CHECK(data::identical(a.kinesthetic, b.kinesthetic));
  CHECK(data::identical(a.replay, b.replay));
  CHECK(data::serialize(a.replay) == data::serialize(b.replay));
}
