#pragma once

// Settings shared by the command-line tools, readable from a config file in
// the key = value format of config.hpp. Command-line flags take precedence.

#include "dexforge/config.hpp"
#include "dexforge/impedance.hpp"
#include "dexforge/pipeline.hpp"
#include "dexforge/policy.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dexforge {

struct RunConfig {
  std::string task;
  std::uint64_t seed{0};
  std::vector<std::uint64_t> seeds;
  control::ImpedanceGains gains{control::default_gains()};
  pipeline::ExtractionConfig extraction;
  policy::ObservationConfig obs;
  policy::PolicyConfig policy;
  policy::ActionType action{policy::ActionType::ForceInformed};
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  int jobs{0};

  /// Keys: task, seed, seeds, kp, kv, kf, filter_window, obs_mode, proprioception,
  /// binary_threshold, action, regressor, knn_k, obs_history, pred_horizon,
  /// exec_horizon, image_weight, wrench_weight, ridge, data_dir, out_dir, jobs.
  static RunConfig from_text(const std::string& text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Defaults with data_dir taken from DEXFORGE_DATA_DIR when set.
  static RunConfig defaults();

  void validate() const;
};

/// DEXFORGE_DATA_DIR, or "data" when unset.
std::filesystem::path default_data_dir();

}  // namespace dexforge
