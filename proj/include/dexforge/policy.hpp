#pragma once

// Behavior cloning on replay demonstrations: observation features, action
// chunks, k-NN and ridge regressors, and receding-horizon rollouts.

#include "dexforge/dataset.hpp"
#include "dexforge/impedance.hpp"
#include "dexforge/task.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dexforge::policy {

enum class ObsMode { ImageFT, ImageBinary, ImageOnly };
enum class ActionType { ForceInformed, ObservedPosition };
enum class Regressor { Knn, Linear };

std::string to_string(ObsMode mode);
std::string to_string(ActionType type);
std::string to_string(Regressor regressor);
ObsMode obs_mode_from_string(const std::string& text);
ActionType action_type_from_string(const std::string& text);
Regressor regressor_from_string(const std::string& text);

struct ObservationConfig {
  ObsMode mode{ObsMode::ImageFT};
  bool include_proprioception{false};
  /// Contact bit is set when |force| strictly exceeds this (N).
  double binary_threshold{0.55};
  int image_width{16};
  int image_height{16};

  void validate() const;
};

struct PolicyConfig {
  int obs_history{2};
  int pred_horizon{16};
  int exec_horizon{8};
  Regressor regressor{Regressor::Knn};
  int knn_k{3};
  double image_weight{1.0};
  double wrench_weight{1.0};
  double ridge{1e-3};

  void validate() const;
};

/// Wrench channels are divided by this before standardization.
inline constexpr double kWrenchScale = 5.0;
/// Policies act at this rate; each action is held for record_hz / kPolicyHz control ticks.
inline constexpr int kPolicyHz = 10;

enum class Channel : std::uint8_t { Image, Wrench, Proprio };

/// Layout of a feature vector: the channel kind and standardization group of
/// every entry.
struct FeatureLayout {
  std::vector<Channel> kind;
  std::vector<int> group;

  size_t size() const { return kind.size(); }
};

FeatureLayout feature_layout(const ObservationConfig& config, int obs_history, int fingers,
                             const std::vector<int>& joints_per_finger);

/// Unstandardized features of `frames` (oldest first, obs_history of them).
VecX raw_features(std::span<const data::Frame> frames, const ObservationConfig& config);

/// Per-group mean and scale computed on a training set.
struct Standardizer {
  VecX mean;
  VecX scale;

  static Standardizer fit(const MatX& raw, const FeatureLayout& layout);
  VecX apply(const VecX& raw) const;
};

/// Standardized and channel-weighted features.
VecX featurize(std::span<const data::Frame> frames, const ObservationConfig& config,
               const Standardizer& standardizer, const FeatureLayout& layout, const PolicyConfig& policy);

struct ActionChunk {
  ActionType type{ActionType::ForceInformed};
  /// targets[finger][h], h = 0 .. pred_horizon-1.
  std::vector<std::vector<Vec2>> targets;

  static ActionChunk from_flat(const VecX& flat, int fingers, int horizon, ActionType type);
  VecX flat() const;
};

struct TrainingSet {
  ObservationConfig obs;
  ActionType action{ActionType::ForceInformed};
  int fingers{0};
  int pred_horizon{16};
  int obs_history{2};
  FeatureLayout layout;
  /// One row per window, unstandardized.
  MatX features;
  /// Flattened chunks, one row per window.
  MatX chunks;
  /// Demos skipped for being too short.
  std::vector<std::string> warnings;

  size_t size() const { return static_cast<size_t>(features.rows()); }
};

/// Sliding windows over 10 Hz replay demos. The chunk at frame t holds the
/// targets of frames t+1 .. t+pred_horizon, padded with the final frame.
TrainingSet build_training_set(std::span<const data::Demonstration> demos, const ObservationConfig& obs,
                               const PolicyConfig& config, ActionType action);

class Policy {
 public:
  Policy() = default;

  const PolicyConfig& config() const { return config_; }
  const ObservationConfig& observation() const { return obs_; }
  ActionType action_type() const { return action_; }
  int fingers() const { return fingers_; }

  /// Prediction from already standardized features.
  VecX predict_standardized(const VecX& features) const;
  ActionChunk predict(std::span<const data::Frame> frames) const;
  VecX prepare(std::span<const data::Frame> frames) const;

  /// k nearest training rows to `features`, closest first.
  std::vector<std::pair<double, int>> neighbours(const VecX& features) const;

  /// Model files (.policy.json) written by `train` and read by `eval`.
  std::string to_json() const;
  static Policy from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Policy load(const std::filesystem::path& path);

  friend Policy train(const TrainingSet& set, const PolicyConfig& config);

 private:
  PolicyConfig config_;
  ObservationConfig obs_;
  ActionType action_{ActionType::ForceInformed};
  int fingers_{0};
  FeatureLayout layout_;
  Standardizer standardizer_;
  MatX features_;  // standardized, weighted
  MatX chunks_;
  MatX weights_;   // linear: (features + 1) x outputs
};

Policy train(const TrainingSet& set, const PolicyConfig& config);

struct RolloutResult {
  sim::Outcome outcome{sim::Outcome::Failure};
  std::map<std::string, double> metrics;
  std::string diagnostic;
  /// 10 Hz observation frames seen by the policy.
  data::Demonstration observations;
  /// Largest age (in actions) of any executed chunk entry.
  int max_chunk_age{0};
};

struct RolloutOptions {
  int render_width{64};
  int render_height{64};
  control::ImpedanceGains gains{control::default_gains()};
};

RolloutResult rollout(const Policy& policy, const sim::TaskSpec& task, std::uint64_t seed,
                      const RolloutOptions& options = {});

/// Observation frame at the current scene state, as recorded in replays.
data::Frame observe(const sim::Scene& scene, std::int64_t tick, const std::vector<Vec2>& targets, int width,
                    int height);

}  // namespace dexforge::policy
