#include "oracles.hpp"

#include "dexforge/pipeline.hpp"
#include "dexforge/policy.hpp"
#include "dexforge/simulator.hpp"

#include <doctest.h>

#include <random>

using namespace dexforge;

namespace {

// 10 Hz replay demo with random 16x16 images, forces, joints and targets.
data::Demonstration synthetic_replay(std::mt19937_64& rng, int frames, int fingers = 1, int side = 16) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  data::Demonstration d;
  d.header.task = "synthetic";
  d.header.seed = rng() % 1000;
  d.header.stage = data::Stage::Replay;
  d.header.record_hz = 10;
  d.header.finger_count = fingers;
  d.header.image_width = side;
  d.header.image_height = side;
  d.header.source = "replay";
  d.header.extraction = data::ExtractionInfo{};
  for (int k = 0; k < frames; ++k) {
    data::Frame f;
    f.tick = k;
    for (int i = 0; i < fingers; ++i) {
      data::FingerSample s;
      s.x = {u(rng) * 0.05, u(rng) * 0.05};
      s.q = VecX(2);
      s.q << u(rng), u(rng);
      s.wrench.force = {2 * u(rng), 2 * u(rng)};
      s.wrench.moment = 0.01 * u(rng);
      s.executed_target = Vec2{u(rng) * 0.05, u(rng) * 0.05};
      f.fingers.push_back(s);
    }
    sim::ByteImage img{side, side, {}};
    for (int p = 0; p < side * side; ++p) img.pixels.push_back(static_cast<std::uint8_t>(rng()));
    f.image = img;
    d.frames.push_back(std::move(f));
  }
  return d;
}

data::Frame frame_with_force(double fx, double fy) {
  std::mt19937_64 rng(0);
  auto f = synthetic_replay(rng, 1).frames[0];
  f.fingers[0].wrench.force = {fx, fy};
  return f;
}

double contact_bit(double fx, double fy) {
  policy::ObservationConfig cfg;
  cfg.mode = policy::ObsMode::ImageBinary;
  const auto f = frame_with_force(fx, fy);
  const VecX raw = policy::raw_features(std::span(&f, 1), cfg);
  REQUIRE(raw.size() == 257);
  return raw[256];
}

std::vector<data::Demonstration> replays(const std::string& task_name, int n) {
  const auto task = sim::builtin_task(task_name);
  std::vector<data::Demonstration> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] =
        data::downsample(pipeline::run_pipeline(task, 1000 + i, {}, control::default_gains()).replay, 10);
  return out;
}

}  // namespace

TEST_CASE("contact bit uses a strict threshold on the force magnitude") {
  CHECK(contact_bit(0.0, 0.6) == 1.0);
  CHECK(contact_bit(0.0, 0.0) == 0.0);
  CHECK(contact_bit(0.0, 0.55) == 0.0);
  CHECK(contact_bit(-0.55, 0.0) == 0.0);
  CHECK(contact_bit(0.4, -0.4) == 1.0);  // |f| = 0.566
}

TEST_CASE("feature layout") {
  policy::ObservationConfig cfg;
  cfg.include_proprioception = true;
  const auto layout = policy::feature_layout(cfg, 2, 2, {2, 3});
  CHECK(layout.size() == 2 * 256 + 2 * 2 * 3 + 2 * (2 + 3));
  CHECK(layout.kind.front() == policy::Channel::Image);
  CHECK(layout.kind[512] == policy::Channel::Wrench);
  CHECK(layout.kind.back() == policy::Channel::Proprio);

  std::mt19937_64 rng(51);
  const auto d = synthetic_replay(rng, 2, 2);
  auto frames = d.frames;
  frames[0].fingers[1].q = VecX::Zero(3);
  frames[1].fingers[1].q = VecX::Zero(3);
  CHECK(static_cast<size_t>(policy::raw_features(frames, cfg).size()) == layout.size());
}

TEST_CASE("image only features are a prefix of image and wrench features") {
  std::mt19937_64 rng(52);
  const auto d = synthetic_replay(rng, 2, 3);
  policy::ObservationConfig ft, only;
  only.mode = policy::ObsMode::ImageOnly;
  const VecX a = policy::raw_features(d.frames, ft);
  const VecX b = policy::raw_features(d.frames, only);
  REQUIRE(b.size() == 512);
  CHECK(a.size() == 512 + 2 * 3 * 3);
  CHECK(a.head(512) == b);
  CHECK(a[512] == d.frames[0].fingers[0].wrench.force.x() / policy::kWrenchScale);
}

TEST_CASE("training windows and chunk padding") {
  std::mt19937_64 rng(53);
  const std::vector<data::Demonstration> demos{synthetic_replay(rng, 40)};
  const policy::PolicyConfig pc;
  for (auto action : {policy::ActionType::ForceInformed, policy::ActionType::ObservedPosition}) {
    const auto set = policy::build_training_set(demos, {}, pc, action);
    REQUIRE(set.size() == 38);
    auto target = [&](int k) {
      const auto& s = demos[0].frames[static_cast<size_t>(k)].fingers[0];
      return action == policy::ActionType::ForceInformed ? *s.executed_target : s.x;
    };
    // the window ending at frame t predicts frames t+1 ..
    const auto first = policy::ActionChunk::from_flat(set.chunks.row(0).transpose(), 1, 16, action);
    for (int h = 0; h < 16; ++h) CHECK(first.targets[0][h] == target(2 + h));
    const auto last = policy::ActionChunk::from_flat(set.chunks.row(37).transpose(), 1, 16, action);
    for (int h = 0; h < 16; ++h) CHECK(last.targets[0][h] == target(39));
    const auto mid = policy::ActionChunk::from_flat(set.chunks.row(30).transpose(), 1, 16, action);
    for (int h = 0; h < 16; ++h) CHECK(mid.targets[0][h] == target(std::min(32 + h, 39)));
  }
}

TEST_CASE("training set preconditions") {
  std::mt19937_64 rng(54);
  std::vector<data::Demonstration> demos{synthetic_replay(rng, 2), synthetic_replay(rng, 10)};
  auto set = policy::build_training_set(demos, {}, {}, policy::ActionType::ForceInformed);
  CHECK(set.size() == 8);
  REQUIRE(set.warnings.size() == 1);
  CHECK(set.warnings[0].find("shorter than obs_history + 1") != std::string::npos);

  demos[1].header.record_hz = 30;
  CHECK_THROWS_AS(policy::build_training_set(demos, {}, {}, policy::ActionType::ForceInformed), ContractViolation);
  demos[1].header.record_hz = 10;
  demos[1].header.stage = data::Stage::Kinesthetic;
  CHECK_THROWS_AS(policy::build_training_set(demos, {}, {}, policy::ActionType::ForceInformed), ContractViolation);

  const std::vector<data::Demonstration> tiny{synthetic_replay(rng, 1)};
  const auto empty = policy::build_training_set(tiny, {}, {}, policy::ActionType::ForceInformed);
  CHECK(empty.size() == 0);
  CHECK_THROWS_AS(policy::train(empty, {}), ContractViolation);
}

TEST_CASE("configuration validation") {
  policy::PolicyConfig pc;
  pc.exec_horizon = 17;
  CHECK_THROWS_AS(pc.validate(), ContractViolation);
  pc = {};
  pc.knn_k = 0;
  CHECK_THROWS_AS(pc.validate(), ContractViolation);
  policy::ObservationConfig oc;
  oc.binary_threshold = 0.0;
  CHECK_THROWS_AS(oc.validate(), ContractViolation);
  CHECK(policy::obs_mode_from_string("image_binary") == policy::ObsMode::ImageBinary);
  CHECK(policy::to_string(policy::ActionType::ObservedPosition) == "observed_position");
  CHECK_THROWS_AS(policy::regressor_from_string("mlp"), ContractViolation);
}

TEST_CASE("nearest neighbour with k = 1 memorizes its training windows") {
  std::mt19937_64 rng(55);
  const std::vector<data::Demonstration> demos{synthetic_replay(rng, 30), synthetic_replay(rng, 25)};
  policy::PolicyConfig pc;
  pc.knn_k = 1;
  const auto set = policy::build_training_set(demos, {}, pc, policy::ActionType::ForceInformed);
  const auto p = policy::train(set, pc);
  int row = 0;
  for (const auto& d : demos)
    for (size_t t = 1; t + 1 < d.frames.size(); ++t, ++row) {
      const auto chunk = p.predict(std::span(d.frames.data() + t - 1, 2));
      CHECK((chunk.flat() - set.chunks.row(row).transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
  CHECK(row == static_cast<int>(set.size()));
}

TEST_CASE("inverse distance weighting") {
  std::mt19937_64 rng(56);
  const std::vector<data::Demonstration> demos{synthetic_replay(rng, 20)};
  policy::PolicyConfig pc;
  pc.knn_k = 3;
  const auto set = policy::build_training_set(demos, {}, pc, policy::ActionType::ForceInformed);
  const auto p = policy::train(set, pc);
  const auto query = synthetic_replay(rng, 2);
  const VecX z = p.prepare(query.frames);
  const auto nn = p.neighbours(z);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0].first <= nn[1].first);
  CHECK(nn[1].first <= nn[2].first);
  VecX expect = VecX::Zero(set.chunks.cols());
  double w = 0.0;
  for (const auto& [d, r] : nn) {
    expect += set.chunks.row(r).transpose() / d;
    w += 1.0 / d;
  }
  expect /= w;
  CHECK((p.predict_standardized(z) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a constant action dataset predicts that constant") {
  std::mt19937_64 rng(57);
  auto d = synthetic_replay(rng, 20);
  for (auto& f : d.frames) f.fingers[0].executed_target = Vec2{0.013, -0.007};
  const std::vector<data::Demonstration> demos{d};
  for (auto reg : {policy::Regressor::Knn, policy::Regressor::Linear}) {
    policy::PolicyConfig pc;
    pc.regressor = reg;
    const auto p = policy::train(policy::build_training_set(demos, {}, pc, policy::ActionType::ForceInformed), pc);
    for (int trial = 0; trial < 5; ++trial) {
      const auto q = synthetic_replay(rng, 2);
      const auto chunk = p.predict(q.frames);
      for (const auto& x : chunk.targets[0]) CHECK((x - Vec2(0.013, -0.007)).norm() < 1e-9);
    }
  }
}

TEST_CASE("ridge regression recovers a linear generator") {
  std::mt19937_64 rng(58);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  policy::ObservationConfig oc;
  oc.include_proprioception = true;
  oc.image_width = oc.image_height = 1;
  policy::PolicyConfig pc;
  pc.obs_history = 1;
  pc.pred_horizon = 1;
  pc.exec_horizon = 1;
  pc.regressor = policy::Regressor::Linear;
  pc.ridge = 1e-12;
  // 1 pixel + fx, fy, m + q0, q1 features feed the next frame's target
  MatX M(2, 6);
  for (int i = 0; i < M.size(); ++i) M.data()[i] = u(rng) * 0.05;
  const Vec2 c(0.01, -0.02);
  auto generate = [&](int frames) {
    auto d = synthetic_replay(rng, frames, 1, 4);
    for (size_t k = 0; k + 1 < d.frames.size(); ++k) {
      const VecX raw = policy::raw_features(std::span(&d.frames[k], 1), oc);
      d.frames[k + 1].fingers[0].executed_target = M * raw + c;
    }
    return d;
  };
  const std::vector<data::Demonstration> demos{generate(60), generate(60)};
  const auto p = policy::train(policy::build_training_set(demos, oc, pc, policy::ActionType::ForceInformed), pc);
  const auto probe = generate(20);
  for (const auto& f : probe.frames) {
    const VecX raw = policy::raw_features(std::span(&f, 1), oc);
    const Vec2 expect = M * raw + c;
    CHECK((p.predict(std::span(&f, 1)).targets[0][0] - expect).norm() < 1e-6);
  }
}

TEST_CASE("model files round trip") {
  std::mt19937_64 rng(59);
  const std::vector<data::Demonstration> demos{synthetic_replay(rng, 20, 2)};
  for (auto reg : {policy::Regressor::Knn, policy::Regressor::Linear}) {
    policy::PolicyConfig pc;
    pc.regressor = reg;
    policy::ObservationConfig oc;
    oc.include_proprioception = true;
    const auto p = policy::train(policy::build_training_set(demos, oc, pc, policy::ActionType::ObservedPosition), pc);
    const auto dir = oracle::temp_dir("policy");
    p.save(dir / "m.policy.json");
    const auto back = policy::Policy::load(dir / "m.policy.json");
    CHECK(back.to_json() == p.to_json());
    CHECK(back.action_type() == policy::ActionType::ObservedPosition);
    CHECK(back.observation().include_proprioception);
    const auto q = synthetic_replay(rng, 2, 2);
    CHECK(back.predict(q.frames).flat() == p.predict(q.frames).flat());
    std::filesystem::remove_all(dir);
  }
  CHECK_THROWS(policy::Policy::from_json("{\"format_version\": 7}"));
}

TEST_CASE("press chunks: force informed targets go beyond the surface, observed ones do not") {
  const auto demos = replays("press-hold", 4);
  const auto scene = sim::reset_task(sim::builtin_task("press-hold"), 0);
  double top = -1e9;
  for (const auto& v : sim::world_vertices(scene.bodies.at(sim::body_index(scene, "table"))))
    top = std::max(top, v.y());
  // fingertip centre height at first touch; contact penetration itself is
  // F / k_n, well under 0.1 mm at these forces
  const double touch = top + scene.fingers[0].chain.link_radius;
  const double beyond = touch - 1e-3;
  for (auto action : {policy::ActionType::ForceInformed, policy::ActionType::ObservedPosition}) {
    const auto set = policy::build_training_set(demos, {}, {}, action);
    double deepest = 1e9;
    for (Eigen::Index r = 0; r < set.chunks.rows(); ++r)
      for (Eigen::Index h = 0; h < 16; ++h) deepest = std::min(deepest, set.chunks(r, 2 * h + 1));
    INFO(policy::to_string(action) << " deepest " << deepest << " surface " << touch);
    if (action == policy::ActionType::ForceInformed) CHECK(deepest < beyond);
    else CHECK(deepest > beyond);
  }
}

TEST_CASE("rollouts execute only fresh chunk entries") {
  const auto demos = replays("slide-cube", 5);
  const policy::PolicyConfig pc;
  const auto p = policy::train(policy::build_training_set(demos, {}, pc, policy::ActionType::ForceInformed), pc);
  const auto task = sim::builtin_task("slide-cube");
  const auto r = policy::rollout(p, task, 0);
  CHECK(r.max_chunk_age == pc.exec_horizon);
  CHECK(r.observations.header.record_hz == 10);
  CHECK(r.observations.frames.size() == static_cast<size_t>(task.horizon_s * 10 + 1));
  CHECK(data::validate(r.observations).size() == 1);  // frame 0 has no executed target yet

  const auto again = policy::rollout(p, task, 0);
  CHECK(again.outcome == r.outcome);
  CHECK(data::identical(again.observations, r.observations));
}

TEST_CASE("a policy that never moves fails the slide task") {
  const auto task = sim::builtin_task("slide-cube");
  std::vector<data::Demonstration> demos;
  for (std::uint64_t seed = 1000; seed < 1003; ++seed) {
    const auto scene = sim::reset_task(task, seed);
    pipeline::ForceInformedTrajectory still;
    still.task = task.name;
    still.seed = seed;
    still.targets = {std::vector<Vec2>(60, sim::fingertip(scene, 0))};
    demos.push_back(data::downsample(pipeline::replay_stage2(task, seed, still, control::default_gains()), 10));
  }
  const policy::PolicyConfig pc;
  const auto p = policy::train(policy::build_training_set(demos, {}, pc, policy::ActionType::ObservedPosition), pc);
  for (std::uint64_t seed : {0u, 1u, 2u}) CHECK(policy::rollout(p, task, seed).outcome == sim::Outcome::Failure);
}
