#include "dexforge/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dexforge {

std::filesystem::path default_data_dir() {
  const char* env = std::getenv("DEXFORGE_DATA_DIR");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("data");
}

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.data_dir = default_data_dir();
  c.out_dir = c.data_dir;
  for (std::uint64_t s = 0; s < 30; ++s) c.seeds.push_back(s);
  return c;
}

RunConfig RunConfig::from_text(const std::string& text, const std::filesystem::path& base_dir) {
  const auto kv = config::KeyValues::parse(text);
  kv.reject_unknown({"task", "seed", "seeds", "kp", "kv", "kf", "filter_window", "obs_mode", "proprioception",
                     "binary_threshold", "action", "regressor", "knn_k", "obs_history", "pred_horizon",
                     "exec_horizon", "image_weight", "wrench_weight", "ridge", "data_dir", "out_dir", "jobs"});
  RunConfig c = defaults();
  auto path = [&](const std::string& key, std::filesystem::path& out) {
    if (const auto v = kv.get(key)) {
      out = *v;
      if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
    }
  };
  auto wrap = [&](const std::string& key, auto fn) {
    try {
      fn();
    } catch (const config::ConfigError&) {
      throw;
    } catch (const ContractViolation& e) {
      throw config::ConfigError(kv.line(key), e.what());
    }
  };
  c.task = kv.get_string("task", c.task);
  c.seed = kv.get_u64("seed", c.seed);
  if (kv.has("seeds")) c.seeds = config::parse_seeds(*kv.get("seeds"), kv.line("seeds"));
  c.gains.kp = kv.get_double("kp", c.gains.kp);
  c.gains.kv = kv.has("kv") ? kv.get_double("kv", 0.0)
                            : control::ImpedanceGains::critically_damped(c.gains.kp).kv;
  c.extraction.kf = kv.get_double("kf", c.extraction.kf);
  c.extraction.filter_window = kv.get_int("filter_window", c.extraction.filter_window);
  if (kv.has("obs_mode")) wrap("obs_mode", [&] { c.obs.mode = policy::obs_mode_from_string(*kv.get("obs_mode")); });
  if (kv.has("proprioception"))
    c.obs.include_proprioception = config::to_bool(*kv.get("proprioception"), kv.line("proprioception"));
  c.obs.binary_threshold = kv.get_double("binary_threshold", c.obs.binary_threshold);
  if (kv.has("action")) wrap("action", [&] { c.action = policy::action_type_from_string(*kv.get("action")); });
  if (kv.has("regressor"))
    wrap("regressor", [&] { c.policy.regressor = policy::regressor_from_string(*kv.get("regressor")); });
  c.policy.knn_k = kv.get_int("knn_k", c.policy.knn_k);
  c.policy.obs_history = kv.get_int("obs_history", c.policy.obs_history);
  c.policy.pred_horizon = kv.get_int("pred_horizon", c.policy.pred_horizon);
  c.policy.exec_horizon = kv.get_int("exec_horizon", c.policy.exec_horizon);
  c.policy.image_weight = kv.get_double("image_weight", c.policy.image_weight);
  c.policy.wrench_weight = kv.get_double("wrench_weight", c.policy.wrench_weight);
  c.policy.ridge = kv.get_double("ridge", c.policy.ridge);
  path("data_dir", c.data_dir);
  if (kv.has("out_dir")) path("out_dir", c.out_dir);
  else c.out_dir = c.data_dir;
  c.jobs = kv.get_int("jobs", c.jobs);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_text(ss.str(), path.parent_path());
  } catch (const config::ConfigError& e) {
    throw ContractViolation(path.string() + ": " + e.what());
  }
}

void RunConfig::validate() const {
  control::validate_gains(gains);
  extraction.validate();
  obs.validate();
  policy.validate();
  if (jobs < 0) throw ContractViolation("jobs must be non-negative");
  if (seeds.empty()) throw ContractViolation("seed list is empty");
}

}  // namespace dexforge
