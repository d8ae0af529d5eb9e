#include "dexforge/pipeline.hpp"

#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace dexforge::pipeline {

void ExtractionConfig::validate() const {
  if (!(kf > 0.0) || !std::isfinite(kf)) throw ContractViolation("extraction kf must be positive");
  if (filter_window < 1) throw ContractViolation("extraction filter window must be at least 1");
}

Vec2 force_informed_target(const Vec2& x_o, const sim::Wrench& sensed, const ExtractionConfig& config) {
  const Vec2 finger_on_object = -sensed.force;
  return x_o + config.kf * finger_on_object;
}

ForceInformedTrajectory extract_stage1(const data::Demonstration& demo, const ExtractionConfig& config) {
  config.validate();
  if (demo.frames.empty()) throw ContractViolation("extract_stage1: empty demonstration");
  if (demo.header.stage != data::Stage::Kinesthetic)
    throw ContractViolation("extract_stage1: expects a kinesthetic recording");
  if (const auto problems = data::validate(demo); !problems.empty())
    throw ContractViolation("extract_stage1: invalid demonstration: " + problems.front());

  ForceInformedTrajectory out;
  out.source_id = data::demo_file_name(demo.header);
  out.task = demo.header.task;
  out.seed = demo.header.seed;
  out.kf = config.kf;
  out.filter_window = config.filter_window;
  out.record_hz = demo.header.record_hz;
  const size_t fingers = static_cast<size_t>(demo.header.finger_count);
  out.targets.assign(fingers, {});
  for (size_t i = 0; i < fingers; ++i) {
    out.targets[i].reserve(demo.frames.size());
    for (size_t k = 0; k < demo.frames.size(); ++k) {
      sim::Wrench sensed = demo.frames[k].fingers[i].wrench;
      if (config.filter_window > 1) {
        const size_t first = k + 1 >= static_cast<size_t>(config.filter_window) ? k + 1 - config.filter_window : 0;
        Vec2 sum = Vec2::Zero();
        for (size_t j = first; j <= k; ++j) sum += demo.frames[j].fingers[i].wrench.force;
        sensed.force = sum / static_cast<double>(k - first + 1);
      }
      out.targets[i].push_back(force_informed_target(demo.frames[k].fingers[i].x, sensed, config));
    }
  }
  return out;
}

ForceInformedTrajectory observed_trajectory(const data::Demonstration& demo) {
  if (demo.frames.empty()) throw ContractViolation("observed_trajectory: empty demonstration");
  ForceInformedTrajectory out;
  out.source_id = data::demo_file_name(demo.header);
  out.task = demo.header.task;
  out.seed = demo.header.seed;
  out.record_hz = demo.header.record_hz;
  out.targets.assign(static_cast<size_t>(demo.header.finger_count), {});
  for (const auto& f : demo.frames)
    for (size_t i = 0; i < out.targets.size(); ++i) out.targets[i].push_back(f.fingers.at(i).x);
  return out;
}

namespace {

data::FingerSample sample(const sim::Scene& scene, int i) {
  data::FingerSample s;
  s.x = sim::fingertip(scene, i);
  s.q = scene.fingers[i].state.q;
  s.wrench = scene.fingers[i].wrench;
  return s;
}

sim::Trajectory start_trajectory(const sim::Scene& scene) {
  sim::Trajectory tr;
  tr.initial = scene;
  return tr;
}

void append_sensors(sim::Trajectory& tr, const sim::Scene& scene) {
  tr.times.push_back(scene.time());
  std::vector<sim::Wrench> w;
  for (const auto& f : scene.fingers) w.push_back(f.wrench);
  tr.wrenches.push_back(std::move(w));
}

}  // namespace

void attach_label(data::Header& header, const sim::TaskSpec& task, const sim::Trajectory& tr) {
  const auto label = sim::label_outcome(task, tr);
  header.outcome = sim::to_string(label.outcome);
  header.metrics = label.metrics;
}

data::Demonstration replay_stage2(const sim::TaskSpec& task, std::uint64_t seed,
                                  const ForceInformedTrajectory& trajectory,
                                  const control::ImpedanceGains& gains, const ReplayOptions& options) {
  if (!trajectory.task.empty() && (trajectory.task != task.name || trajectory.seed != seed))
    throw ContractViolation("replay_stage2: trajectory was recorded for " + trajectory.task + " seed " +
                            std::to_string(trajectory.seed));
  if (trajectory.length() == 0) throw ContractViolation("replay_stage2: empty trajectory");
  if (trajectory.record_hz != options.tracking.control_rate_hz)
    throw ContractViolation("replay_stage2: trajectory rate differs from the control rate");

  sim::Scene scene = sim::reset_task(task, seed);
  if (trajectory.targets.size() != scene.fingers.size())
    throw ContractViolation("replay_stage2: one target sequence per finger required");

  data::Demonstration demo;
  auto& h = demo.header;
  h.task = task.name;
  h.seed = seed;
  h.stage = data::Stage::Replay;
  h.record_hz = trajectory.record_hz;
  h.finger_count = static_cast<int>(scene.fingers.size());
  h.image_width = options.image_width;
  h.image_height = options.image_height;
  h.hand_spec_hash = data::hand_spec_hash(scene);
  h.source = trajectory.kf > 0.0 ? "replay" : "replay-observed";
  if (trajectory.kf > 0.0) h.extraction = data::ExtractionInfo{trajectory.kf, trajectory.filter_window};

  sim::Trajectory tr = start_trajectory(scene);
  sim::Scene last = scene;
  auto observer = [&](int tick, const sim::Scene& s) {
    data::Frame f;
    f.tick = tick;
    for (int i = 0; i < static_cast<int>(s.fingers.size()); ++i) {
      auto fs = sample(s, i);
      fs.executed_target = trajectory.targets[i][tick];
      f.fingers.push_back(std::move(fs));
    }
    f.image = sim::quantize(sim::render_raster(s, options.image_width, options.image_height));
    demo.frames.push_back(std::move(f));
    append_sensors(tr, s);
    last = s;
  };

  std::vector<int> all(scene.fingers.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  try {
    auto result = control::track_trajectory(scene, all, trajectory.targets, gains, options.tracking, observer);
    tr.final = std::move(result.final_scene);
  } catch (const sim::SimulationDiverged& e) {
    tr.diverged = true;
    tr.diagnostic = e.what();
    tr.final = std::move(last);
  }
  attach_label(h, task, tr);
  return demo;
}

KinestheticStepper::KinestheticStepper(sim::Scene& scene, int control_rate_hz)
    : scene_(&scene), substeps_(control::substeps_per_tick(scene, control_rate_hz)), held_(scene.fingers.size()) {}

void KinestheticStepper::step(const std::vector<std::optional<Vec2>>& command) {
  sim::Scene& scene = *scene_;
  if (command.size() != scene.fingers.size())
    throw ContractViolation("driver returned " + std::to_string(command.size()) + " handle targets for " +
                            std::to_string(scene.fingers.size()) + " fingers");
  for (int s = 1; s <= substeps_; ++s) {
    const double u = static_cast<double>(s) / substeps_;
    for (int i = 0; i < static_cast<int>(scene.fingers.size()); ++i) {
      const auto& target = command[i];
      if (!target) sim::release_operator_handle(scene, i);
      else if (!held_[i]) sim::set_operator_handle(scene, i, *target);
      else sim::set_operator_handle(scene, i, *held_[i] + (*target - *held_[i]) * u);
    }
    sim::advance(scene, sim::gravity_compensation(scene));
  }
  held_ = command;
}

void KinestheticStepper::release_all() {
  for (int i = 0; i < static_cast<int>(scene_->fingers.size()); ++i) sim::release_operator_handle(*scene_, i);
  std::fill(held_.begin(), held_.end(), std::nullopt);
}

data::Frame kinesthetic_frame(const sim::Scene& scene, std::int64_t tick,
                              const std::vector<std::optional<Vec2>>& handles) {
  data::Frame f;
  f.tick = tick;
  for (int i = 0; i < static_cast<int>(scene.fingers.size()); ++i) {
    auto fs = sample(scene, i);
    fs.handle = handles.empty() ? std::nullopt : handles.at(i);
    f.fingers.push_back(std::move(fs));
  }
  return f;
}

data::Header kinesthetic_header(const sim::TaskSpec& task, std::uint64_t seed, const sim::Scene& scene,
                                const std::string& source, int record_hz) {
  data::Header h;
  h.task = task.name;
  h.seed = seed;
  h.stage = data::Stage::Kinesthetic;
  h.record_hz = record_hz;
  h.finger_count = static_cast<int>(scene.fingers.size());
  h.hand_spec_hash = data::hand_spec_hash(scene);
  h.source = source;
  return h;
}

int horizon_frames(const sim::TaskSpec& task, int record_hz) {
  return static_cast<int>(std::floor(task.horizon_s * record_hz + 1e-9)) + 1;
}

sim::Trajectory sensor_trajectory(const data::Demonstration& demo, const sim::Scene& initial,
                                  const sim::Scene& final_scene) {
  sim::Trajectory tr;
  tr.initial = initial;
  tr.final = final_scene;
  for (size_t k = 0; k < demo.frames.size(); ++k) {
    tr.times.push_back(demo.time(k));
    std::vector<sim::Wrench> w;
    for (const auto& s : demo.frames[k].fingers) w.push_back(s.wrench);
    tr.wrenches.push_back(std::move(w));
  }
  return tr;
}

KinestheticRun record_kinesthetic_run(const sim::TaskSpec& task, std::uint64_t seed, HandleDriver& driver,
                                      const RecordOptions& options) {
  sim::Scene scene = sim::reset_task(task, seed);
  const int max_frames = options.max_frames > 0 ? options.max_frames : horizon_frames(task, options.control_rate_hz);

  KinestheticRun run;
  auto& demo = run.demo;
  demo.header = kinesthetic_header(task, seed, scene, driver.name(), options.control_rate_hz);

  sim::Trajectory& tr = run.trajectory;
  tr = start_trajectory(scene);
  auto record = [&](int tick, const std::vector<std::optional<Vec2>>& handles) {
    demo.frames.push_back(kinesthetic_frame(scene, tick, handles));
    append_sensors(tr, scene);
  };
  record(0, {});

  KinestheticStepper stepper(scene, options.control_rate_hz);
  for (int tick = 1; tick < max_frames; ++tick) {
    auto command = driver.next(scene, tick);
    if (!command) break;
    try {
      stepper.step(*command);
    } catch (const sim::SimulationDiverged& e) {
      tr.diverged = true;
      tr.diagnostic = e.what();
      break;
    }
    record(tick, *command);
  }
  stepper.release_all();
  tr.final = std::move(scene);
  demo.header.truncated = driver.truncated();
  attach_label(demo.header, task, tr);
  for (const auto& [k, v] : driver.metrics()) demo.header.metrics[k] = v;
  return run;
}

data::Demonstration record_kinesthetic(const sim::TaskSpec& task, std::uint64_t seed, HandleDriver& driver,
                                       const RecordOptions& options) {
  return record_kinesthetic_run(task, seed, driver, options).demo;
}

std::optional<std::vector<std::optional<Vec2>>> SequenceDriver::next(const sim::Scene&, int tick) {
  if (tick <= 0 || static_cast<size_t>(tick) >= targets_.size()) return std::nullopt;
  return targets_[tick];
}

std::vector<std::vector<std::optional<Vec2>>> handle_sequence(const data::Demonstration& demo) {
  std::vector<std::vector<std::optional<Vec2>>> out;
  for (const auto& f : demo.frames) {
    std::vector<std::optional<Vec2>> row;
    for (const auto& s : f.fingers) row.push_back(s.handle);
    out.push_back(std::move(row));
  }
  return out;
}

PipelineResult run_pipeline(const sim::TaskSpec& task, std::uint64_t seed, const ExtractionConfig& config,
                            const control::ImpedanceGains& gains, const ReplayOptions& options) {
  PipelineResult r;
  auto driver = make_scripted_driver(task, seed);
  r.kinesthetic = record_kinesthetic(task, seed, *driver);
  r.trajectory = extract_stage1(r.kinesthetic, config);
  r.replay = replay_stage2(task, seed, r.trajectory, gains, options);
  return r;
}

sim::Outcome demo_outcome(const data::Demonstration& demo) {
  if (demo.header.outcome.empty()) throw ContractViolation("demonstration carries no outcome label");
  return sim::outcome_from_string(demo.header.outcome);
}

}  // namespace dexforge::pipeline
