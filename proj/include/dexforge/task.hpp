#pragma once

#include "dexforge/scene.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dexforge::sim {

/// Offsets sampled uniformly when a task is reset.
struct PoseRegion {
  double x_lo{0.0}, x_hi{0.0};
  double y_lo{0.0}, y_hi{0.0};
  double angle_lo{0.0}, angle_hi{0.0};

  bool contains(double dx, double dy, double dangle) const;
};

struct InitRandomization {
  /// Bodies moved together by one sampled offset.
  std::vector<std::string> bodies;
  PoseRegion region;
};

/// Named outcome rule. `body` names the object the rule inspects.
struct Predicate {
  std::string rule{"never"};
  std::string body;
  std::map<std::string, double> params;

  double param(const std::string& key) const;
};

struct OodOverrides {
  std::map<std::string, double> mass_multiplier;
  std::optional<PoseRegion> region;
};

struct TaskSpec {
  std::string name;
  std::string description;
  Scene scene;
  InitRandomization init;
  Predicate success;
  Predicate partial;
  double horizon_s{5.0};
  /// Task constants shared by drivers and predicates (goal positions, setpoints).
  std::map<std::string, double> params;
  /// Applied on reset when present.
  std::optional<OodOverrides> ood_overrides;
  /// Out-of-distribution variant offered by the task, activated with make_ood.
  std::optional<OodOverrides> ood_variant;

  double param(const std::string& key) const;
  int horizon_steps() const;
};

enum class Outcome { Success, Partial, Failure };

std::string to_string(Outcome outcome);
Outcome outcome_from_string(const std::string& text);

/// What label_outcome sees of a run: the 30 Hz sensor history and the
/// initial and final scene states.
struct Trajectory {
  Scene initial;
  Scene final;
  std::vector<double> times;
  std::vector<std::vector<Wrench>> wrenches;
  bool diverged{false};
  std::string diagnostic;
};

struct LabeledOutcome {
  Outcome outcome{Outcome::Failure};
  std::map<std::string, double> metrics;
};

Scene reset_task(const TaskSpec& task, std::uint64_t seed);

struct PoseOffset {
  double dx{0.0}, dy{0.0}, dangle{0.0};
};

/// The offset reset_task applies to the randomized bodies for `seed`.
PoseOffset sample_offset(const TaskSpec& task, std::uint64_t seed);

LabeledOutcome label_outcome(const TaskSpec& task, const Trajectory& trajectory);

int body_index(const Scene& scene, const std::string& name);

std::vector<std::string> builtin_task_names();

/// Built-in tasks; a "-ood" suffix selects the task's OOD variant.
TaskSpec builtin_task(const std::string& name);

TaskSpec make_ood(TaskSpec task);

/// Standard two-link instrumented finger rooted at `base`, pointing down.
hand::FingerChain standard_finger(const Vec2& base);

}  // namespace dexforge::sim
