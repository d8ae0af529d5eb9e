#pragma once

// Two-stage demonstration collection. Stage 1 turns a kinesthetic recording
// into force-informed position targets; Stage 2 replays those targets under
// impedance control and records a robot-only demonstration.

#include "dexforge/dataset.hpp"
#include "dexforge/impedance.hpp"
#include "dexforge/task.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dexforge::pipeline {

struct ExtractionConfig {
  /// Compliance of the target offset, m/N.
  double kf{1.0 / 220.0};
  /// Causal moving average over this many frames; 1 disables filtering.
  int filter_window{1};

  void validate() const;
  data::ExtractionInfo info() const { return {kf, filter_window}; }
};

/// x_f = x_o + kf * f, where f = -sensed.force is the finger-on-object force.
Vec2 force_informed_target(const Vec2& x_o, const sim::Wrench& sensed, const ExtractionConfig& config);

struct ForceInformedTrajectory {
  std::string source_id;
  std::string task;
  std::uint64_t seed{0};
  /// kf used; 0 for a plain copy of the observed positions.
  double kf{0.0};
  int filter_window{1};
  int record_hz{data::kRecordHz};
  /// targets[finger][k] for recording frame k.
  std::vector<std::vector<Vec2>> targets;

  size_t length() const { return targets.empty() ? 0 : targets.front().size(); }
};

ForceInformedTrajectory extract_stage1(const data::Demonstration& demo, const ExtractionConfig& config);

/// The observed positions of a recording used directly as targets.
ForceInformedTrajectory observed_trajectory(const data::Demonstration& demo);

/// Target files (.targets.json) written by `extract` and read by `replay`.
std::string trajectory_to_json(const ForceInformedTrajectory& trajectory);
ForceInformedTrajectory trajectory_from_json(const std::string& text);
void save_trajectory(const ForceInformedTrajectory& trajectory, const std::filesystem::path& path);
ForceInformedTrajectory load_trajectory(const std::filesystem::path& path);
/// "<task>-targets-seed<seed>.targets.json"
std::string trajectory_file_name(const ForceInformedTrajectory& trajectory);

struct ReplayOptions {
  int image_width{64};
  int image_height{64};
  control::TrackingOptions tracking;
};

/// Stage 2. Frame k holds the state after target k was tracked for one
/// control period (frame 0 is the reset state). The header carries the
/// outcome label of the replayed run.
data::Demonstration replay_stage2(const sim::TaskSpec& task, std::uint64_t seed,
                                  const ForceInformedTrajectory& trajectory,
                                  const control::ImpedanceGains& gains, const ReplayOptions& options = {});

/// A source of operator handle targets, queried once per control tick.
class HandleDriver {
 public:
  virtual ~HandleDriver() = default;
  virtual std::string name() const = 0;
  /// Targets to hold over control tick `tick` (from tick-1 to tick), one per
  /// finger; nullopt releases that finger's handle. Returning nullopt ends
  /// the recording.
  virtual std::optional<std::vector<std::optional<Vec2>>> next(const sim::Scene& scene, int tick) = 0;
  /// Set by live drivers whose input stopped before the demonstration ended.
  virtual bool truncated() const { return false; }
  virtual std::map<std::string, double> metrics() const { return {}; }
};

/// One kinesthetic control period at a time: handle targets are ramped
/// linearly across the period from the previous tick's target (first-order
/// hold); a newly grabbed handle jumps. The robot only compensates gravity.
class KinestheticStepper {
 public:
  explicit KinestheticStepper(sim::Scene& scene, int control_rate_hz = data::kRecordHz);

  /// Throws SimulationDiverged; the scene is then left mid-period.
  void step(const std::vector<std::optional<Vec2>>& command);
  void release_all();

 private:
  sim::Scene* scene_;
  int substeps_;
  std::vector<std::optional<Vec2>> held_;
};

/// Kinesthetic frame of the current scene state.
data::Frame kinesthetic_frame(const sim::Scene& scene, std::int64_t tick,
                              const std::vector<std::optional<Vec2>>& handles);

/// Header fields shared by every kinesthetic recording of (task, seed).
data::Header kinesthetic_header(const sim::TaskSpec& task, std::uint64_t seed, const sim::Scene& scene,
                                const std::string& source, int record_hz = data::kRecordHz);

/// Outcome label of a recorded run, written into `header`.
void attach_label(data::Header& header, const sim::TaskSpec& task, const sim::Trajectory& trajectory);

/// Frame budget of a recording of `task`: the horizon plus the initial frame.
int horizon_frames(const sim::TaskSpec& task, int record_hz = data::kRecordHz);

/// Sensor history of a recorded demonstration, for outcome labelling.
sim::Trajectory sensor_trajectory(const data::Demonstration& demo, const sim::Scene& initial,
                                  const sim::Scene& final_scene);

struct RecordOptions {
  int control_rate_hz{data::kRecordHz};
  /// Upper bound on recorded frames; 0 means the task horizon.
  int max_frames{0};
};

struct KinestheticRun {
  data::Demonstration demo;
  sim::Trajectory trajectory;
};

/// Stage 1 recording: the driver moves the fingers through operator handles
/// while the robot only compensates gravity.
KinestheticRun record_kinesthetic_run(const sim::TaskSpec& task, std::uint64_t seed, HandleDriver& driver,
                                      const RecordOptions& options = {});

data::Demonstration record_kinesthetic(const sim::TaskSpec& task, std::uint64_t seed, HandleDriver& driver,
                                       const RecordOptions& options = {});

/// Scripted demonstrator for a built-in task (approach, contact,
/// force-regulated motion, retreat) with small seeded waypoint noise.
std::unique_ptr<HandleDriver> make_scripted_driver(const sim::TaskSpec& task, std::uint64_t seed);

/// Plays back a fixed per-tick handle target sequence.
class SequenceDriver : public HandleDriver {
 public:
  explicit SequenceDriver(std::vector<std::vector<std::optional<Vec2>>> targets)
      : targets_(std::move(targets)) {}
  std::string name() const override { return "sequence"; }
  std::optional<std::vector<std::optional<Vec2>>> next(const sim::Scene& scene, int tick) override;

 private:
  std::vector<std::vector<std::optional<Vec2>>> targets_;
};

/// Handle target sequence recorded in a kinesthetic demonstration.
std::vector<std::vector<std::optional<Vec2>>> handle_sequence(const data::Demonstration& demo);

/// Kinesthetic recording, Stage 1 and Stage 2 for one seed.
struct PipelineResult {
  data::Demonstration kinesthetic;
  ForceInformedTrajectory trajectory;
  data::Demonstration replay;
};

PipelineResult run_pipeline(const sim::TaskSpec& task, std::uint64_t seed, const ExtractionConfig& config,
                            const control::ImpedanceGains& gains, const ReplayOptions& options = {});

/// Label of a replay or rollout demonstration stored in its header.
sim::Outcome demo_outcome(const data::Demonstration& demo);

}  // namespace dexforge::pipeline
