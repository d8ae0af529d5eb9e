#include "dexforge/policy.hpp"

#include "dexforge/kernels.hpp"
#include "dexforge/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace dexforge::policy {

std::string to_string(ObsMode mode) {
  switch (mode) {
    case ObsMode::ImageFT: return "image_ft";
    case ObsMode::ImageBinary: return "image_binary";
    case ObsMode::ImageOnly: return "image_only";
  }
  return "?";
}

std::string to_string(ActionType type) {
  return type == ActionType::ForceInformed ? "force_informed" : "observed_position";
}

std::string to_string(Regressor regressor) { return regressor == Regressor::Knn ? "knn" : "linear"; }

ObsMode obs_mode_from_string(const std::string& text) {
  if (text == "image_ft") return ObsMode::ImageFT;
  if (text == "image_binary") return ObsMode::ImageBinary;
  if (text == "image_only") return ObsMode::ImageOnly;
  throw ContractViolation("unknown observation mode '" + text + "'");
}

ActionType action_type_from_string(const std::string& text) {
  if (text == "force_informed") return ActionType::ForceInformed;
  if (text == "observed_position") return ActionType::ObservedPosition;
  throw ContractViolation("unknown action type '" + text + "'");
}

Regressor regressor_from_string(const std::string& text) {
  if (text == "knn") return Regressor::Knn;
  if (text == "linear") return Regressor::Linear;
  throw ContractViolation("unknown regressor '" + text + "'");
}

void ObservationConfig::validate() const {
  if (!(binary_threshold > 0.0) || !std::isfinite(binary_threshold))
    throw ContractViolation("binary threshold must be positive");
  if (image_width <= 0 || image_height <= 0) throw ContractViolation("image downsample size must be positive");
}

void PolicyConfig::validate() const {
  if (obs_history < 1) throw ContractViolation("obs_history must be at least 1");
  if (pred_horizon < 1) throw ContractViolation("pred_horizon must be at least 1");
  if (exec_horizon < 1 || exec_horizon > pred_horizon)
    throw ContractViolation("exec_horizon must lie in [1, pred_horizon]");
  if (knn_k < 1) throw ContractViolation("knn_k must be at least 1");
  if (!(ridge >= 0.0)) throw ContractViolation("ridge must be non-negative");
  if (!(image_weight >= 0.0) || !(wrench_weight >= 0.0) || !std::isfinite(image_weight + wrench_weight))
    throw ContractViolation("feature weights must be finite and non-negative");
}

namespace {

int wrench_channels(ObsMode mode) {
  switch (mode) {
    case ObsMode::ImageFT: return 3;
    case ObsMode::ImageBinary: return 1;
    case ObsMode::ImageOnly: return 0;
  }
  return 0;
}

}  // namespace

FeatureLayout feature_layout(const ObservationConfig& config, int obs_history, int fingers,
                             const std::vector<int>& joints_per_finger) {
  FeatureLayout layout;
  const int pixels = config.image_width * config.image_height;
  int group = 0;
  for (int h = 0; h < obs_history; ++h)
    for (int p = 0; p < pixels; ++p) {
      layout.kind.push_back(Channel::Image);
      layout.group.push_back(group);
    }
  ++group;
  const int wc = wrench_channels(config.mode);
  for (int h = 0; h < obs_history; ++h)
    for (int i = 0; i < fingers; ++i)
      for (int c = 0; c < wc; ++c) {
        layout.kind.push_back(Channel::Wrench);
        layout.group.push_back(group + i * wc + c);
      }
  group += fingers * wc;
  if (config.include_proprioception) {
    std::vector<int> offset(fingers + 1, 0);
    for (int i = 0; i < fingers; ++i) offset[i + 1] = offset[i] + joints_per_finger.at(i);
    for (int h = 0; h < obs_history; ++h)
      for (int i = 0; i < fingers; ++i)
        for (int j = 0; j < joints_per_finger[i]; ++j) {
          layout.kind.push_back(Channel::Proprio);
          layout.group.push_back(group + offset[i] + j);
        }
  }
  return layout;
}

VecX raw_features(std::span<const data::Frame> frames, const ObservationConfig& config) {
  config.validate();
  if (frames.empty()) throw ContractViolation("featurize: no frames");
  const size_t fingers = frames.front().fingers.size();
  std::vector<double> out;
  for (const auto& f : frames) {
    if (!f.image) throw ContractViolation("featurize: frame " + std::to_string(f.tick) + " has no image");
    if (f.fingers.size() != fingers) throw ContractViolation("featurize: finger count changes between frames");
    const auto px = sim::downsample(*f.image, config.image_width, config.image_height);
    out.insert(out.end(), px.begin(), px.end());
  }
  for (const auto& f : frames)
    for (const auto& s : f.fingers) {
      switch (config.mode) {
        case ObsMode::ImageFT:
          out.push_back(s.wrench.force.x() / kWrenchScale);
          out.push_back(s.wrench.force.y() / kWrenchScale);
          out.push_back(s.wrench.moment / kWrenchScale);
          break;
        case ObsMode::ImageBinary:
          out.push_back(s.wrench.force.norm() > config.binary_threshold ? 1.0 : 0.0);
          break;
        case ObsMode::ImageOnly: break;
      }
    }
  if (config.include_proprioception)
    for (const auto& f : frames)
      for (const auto& s : f.fingers)
        for (Eigen::Index j = 0; j < s.q.size(); ++j) out.push_back(s.q[j]);
  return Eigen::Map<const VecX>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Standardizer Standardizer::fit(const MatX& raw, const FeatureLayout& layout) {
  if (raw.rows() == 0) throw ContractViolation("standardizer: empty training set");
  if (static_cast<size_t>(raw.cols()) != layout.size())
    throw ContractViolation("standardizer: feature width does not match the layout");
  const int groups = layout.group.empty() ? 0 : *std::max_element(layout.group.begin(), layout.group.end()) + 1;
  std::vector<double> sum(groups, 0.0), sq(groups, 0.0), count(groups, 0.0);
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const int g = layout.group[c];
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
      sum[g] += raw(r, c);
      count[g] += 1.0;
    }
  }
  std::vector<double> mean(groups);
  for (int g = 0; g < groups; ++g) mean[g] = sum[g] / count[g];
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const int g = layout.group[c];
    for (Eigen::Index r = 0; r < raw.rows(); ++r) sq[g] += (raw(r, c) - mean[g]) * (raw(r, c) - mean[g]);
  }
  Standardizer s;
  s.mean.resize(raw.cols());
  s.scale.resize(raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const int g = layout.group[c];
    const double sd = std::sqrt(sq[g] / count[g]);
    s.mean[c] = mean[g];
    // constant channels pass through unscaled
    s.scale[c] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

VecX Standardizer::apply(const VecX& raw) const {
  if (raw.size() != mean.size())
    throw ContractViolation("featurize: expected " + std::to_string(mean.size()) + " features, got " +
                            std::to_string(raw.size()));
  return (raw - mean).cwiseProduct(scale);
}

namespace {

void weigh(VecX& features, const FeatureLayout& layout, const PolicyConfig& policy) {
  for (Eigen::Index c = 0; c < features.size(); ++c) {
    if (layout.kind[c] == Channel::Image) features[c] *= policy.image_weight;
    else if (layout.kind[c] == Channel::Wrench) features[c] *= policy.wrench_weight;
  }
}

}  // namespace

VecX featurize(std::span<const data::Frame> frames, const ObservationConfig& config,
               const Standardizer& standardizer, const FeatureLayout& layout, const PolicyConfig& policy) {
  if (static_cast<int>(frames.size()) != policy.obs_history)
    throw ContractViolation("featurize: expected " + std::to_string(policy.obs_history) + " frames, got " +
                            std::to_string(frames.size()));
  VecX z = standardizer.apply(raw_features(frames, config));
  if (static_cast<size_t>(z.size()) != layout.size()) throw ContractViolation("featurize: layout mismatch");
  weigh(z, layout, policy);
  return z;
}

ActionChunk ActionChunk::from_flat(const VecX& flat, int fingers, int horizon, ActionType type) {
  if (flat.size() != static_cast<Eigen::Index>(fingers) * horizon * 2)
    throw ContractViolation("action chunk has the wrong size");
  ActionChunk c;
  c.type = type;
  c.targets.assign(fingers, std::vector<Vec2>(horizon));
  for (int i = 0; i < fingers; ++i)
    for (int h = 0; h < horizon; ++h) {
      const Eigen::Index o = (static_cast<Eigen::Index>(i) * horizon + h) * 2;
      c.targets[i][h] = Vec2(flat[o], flat[o + 1]);
      if (!c.targets[i][h].allFinite()) throw ContractViolation("action chunk holds a non-finite target");
    }
  return c;
}

VecX ActionChunk::flat() const {
  const Eigen::Index fingers = static_cast<Eigen::Index>(targets.size());
  const Eigen::Index horizon = fingers ? static_cast<Eigen::Index>(targets.front().size()) : 0;
  VecX out(fingers * horizon * 2);
  for (Eigen::Index i = 0; i < fingers; ++i)
    for (Eigen::Index h = 0; h < horizon; ++h) out.segment<2>((i * horizon + h) * 2) = targets[i][h];
  return out;
}

TrainingSet build_training_set(std::span<const data::Demonstration> demos, const ObservationConfig& obs,
                               const PolicyConfig& config, ActionType action) {
  obs.validate();
  config.validate();
  TrainingSet set;
  set.obs = obs;
  set.action = action;
  set.pred_horizon = config.pred_horizon;
  set.obs_history = config.obs_history;

  std::vector<VecX> rows;
  std::vector<VecX> chunks;
  std::vector<int> joints;
  for (const auto& demo : demos) {
    const std::string id = data::demo_file_name(demo.header);
    if (demo.header.stage != data::Stage::Replay)
      throw ContractViolation("build_training_set: " + id + " is not a replay demonstration");
    if (demo.header.record_hz != kPolicyHz)
      throw ContractViolation("build_training_set: " + id + " is not downsampled to 10 Hz");
    if (const auto problems = data::validate(demo); !problems.empty())
      throw ContractViolation("build_training_set: " + id + ": " + problems.front());
    const int T = static_cast<int>(demo.frames.size());
    if (T < config.obs_history + 1) {
      set.warnings.push_back(id + ": " + std::to_string(T) + " frames, shorter than obs_history + 1; skipped");
      continue;
    }
    if (set.fingers == 0) {
      set.fingers = demo.header.finger_count;
      for (const auto& s : demo.frames.front().fingers) joints.push_back(static_cast<int>(s.q.size()));
    } else if (demo.header.finger_count != set.fingers) {
      throw ContractViolation("build_training_set: demonstrations disagree on finger count");
    }
    for (int t = config.obs_history - 1; t + 1 < T; ++t) {
      std::span<const data::Frame> window(demo.frames.data() + t + 1 - config.obs_history,
                                          static_cast<size_t>(config.obs_history));
      rows.push_back(raw_features(window, obs));
      VecX chunk(static_cast<Eigen::Index>(set.fingers) * config.pred_horizon * 2);
      for (int i = 0; i < set.fingers; ++i)
        for (int h = 0; h < config.pred_horizon; ++h) {
          const auto& s = demo.frames[std::min(t + 1 + h, T - 1)].fingers[i];
          Vec2 target;
          if (action == ActionType::ForceInformed) {
            if (!s.executed_target) throw ContractViolation("build_training_set: " + id + " lacks executed targets");
            target = *s.executed_target;
          } else {
            target = s.x;
          }
          chunk.segment<2>((static_cast<Eigen::Index>(i) * config.pred_horizon + h) * 2) = target;
        }
      chunks.push_back(std::move(chunk));
    }
  }
  if (rows.empty()) return set;
  const Eigen::Index width = rows.front().size();
  set.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  set.chunks.resize(static_cast<Eigen::Index>(rows.size()), chunks.front().size());
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) throw ContractViolation("build_training_set: feature width differs between demos");
    set.features.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    set.chunks.row(static_cast<Eigen::Index>(r)) = chunks[r].transpose();
  }
  set.layout = feature_layout(obs, config.obs_history, set.fingers, joints);
  return set;
}

Policy train(const TrainingSet& set, const PolicyConfig& config) {
  config.validate();
  if (set.size() == 0) throw ContractViolation("train: empty training set");
  if (config.obs_history != set.obs_history || config.pred_horizon != set.pred_horizon)
    throw ContractViolation("train: horizons differ from the training set");
  if (set.layout.size() != static_cast<size_t>(set.features.cols()))
    throw ContractViolation("train: feature layout does not match the features");

  Policy p;
  p.config_ = config;
  p.obs_ = set.obs;
  p.action_ = set.action;
  p.fingers_ = set.fingers;
  p.layout_ = set.layout;
  p.standardizer_ = Standardizer::fit(set.features, set.layout);
  p.features_.resize(set.features.rows(), set.features.cols());
  for (Eigen::Index r = 0; r < set.features.rows(); ++r) {
    VecX z = p.standardizer_.apply(set.features.row(r).transpose());
    weigh(z, set.layout, config);
    p.features_.row(r) = z.transpose();
  }
  p.chunks_ = set.chunks;

  if (config.regressor == Regressor::Linear) {
    // ridge on [features, 1]; the intercept is not penalized
    const Eigen::Index n = p.features_.rows(), d = p.features_.cols();
    MatX X(n, d + 1);
    X.leftCols(d) = p.features_;
    X.col(d).setOnes();
    MatX A = X.transpose() * X;
    for (Eigen::Index i = 0; i < d; ++i) A(i, i) += config.ridge;
    p.weights_ = A.ldlt().solve(X.transpose() * p.chunks_);
    if (!p.weights_.allFinite()) throw ContractViolation("train: ridge solve produced non-finite weights");
  }
  return p;
}

std::vector<std::pair<double, int>> Policy::neighbours(const VecX& features) const {
  const auto d2 = kernels::squared_distances_parallel(features_, features);
  std::vector<std::pair<double, int>> order(d2.size());
  for (size_t r = 0; r < d2.size(); ++r) order[r] = {d2[r], static_cast<int>(r)};
  const size_t k = std::min(order.size(), static_cast<size_t>(config_.knn_k));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  order.resize(k);
  for (auto& [d, r] : order) d = std::sqrt(d);
  return order;
}

VecX Policy::predict_standardized(const VecX& features) const {
  if (features_.rows() == 0) throw ContractViolation("predict: policy is not trained");
  if (features.size() != features_.cols()) throw ContractViolation("predict: feature dimension mismatch");
  if (config_.regressor == Regressor::Linear) {
    const Eigen::Index d = features_.cols();
    return weights_.topRows(d).transpose() * features + weights_.row(d).transpose();
  }
  const auto nn = neighbours(features);
  // exact matches win outright
  if (nn.front().first <= 1e-12) {
    VecX sum = VecX::Zero(chunks_.cols());
    int n = 0;
    for (const auto& [d, r] : nn)
      if (d <= 1e-12) {
        sum += chunks_.row(r).transpose();
        ++n;
      }
    return sum / n;
  }
  VecX sum = VecX::Zero(chunks_.cols());
  double wsum = 0.0;
  for (const auto& [d, r] : nn) {
    const double w = 1.0 / d;
    sum += w * chunks_.row(r).transpose();
    wsum += w;
  }
  return sum / wsum;
}

VecX Policy::prepare(std::span<const data::Frame> frames) const {
  if (!frames.empty() && static_cast<int>(frames.front().fingers.size()) != fingers_)
    throw ContractViolation("predict: policy was trained for " + std::to_string(fingers_) + " fingers");
  return featurize(frames, obs_, standardizer_, layout_, config_);
}

ActionChunk Policy::predict(std::span<const data::Frame> frames) const {
  return ActionChunk::from_flat(predict_standardized(prepare(frames)), fingers_, config_.pred_horizon, action_);
}

data::Frame observe(const sim::Scene& scene, std::int64_t tick, const std::vector<Vec2>& targets, int width,
                    int height) {
  data::Frame f;
  f.tick = tick;
  for (int i = 0; i < static_cast<int>(scene.fingers.size()); ++i) {
    data::FingerSample s;
    s.x = sim::fingertip(scene, i);
    s.q = scene.fingers[i].state.q;
    s.wrench = scene.fingers[i].wrench;
    if (!targets.empty()) s.executed_target = targets.at(i);
    f.fingers.push_back(std::move(s));
  }
  f.image = sim::quantize(sim::render_raster(scene, width, height));
  return f;
}

RolloutResult rollout(const Policy& policy, const sim::TaskSpec& task, std::uint64_t seed,
                      const RolloutOptions& options) {
  const auto& cfg = policy.config();
  sim::Scene scene = sim::reset_task(task, seed);
  if (static_cast<int>(scene.fingers.size()) != policy.fingers())
    throw ContractViolation("rollout: policy was trained for " + std::to_string(policy.fingers()) +
                            " fingers, task has " + std::to_string(scene.fingers.size()));
  const int hold = data::kRecordHz / kPolicyHz;
  const int substeps = control::substeps_per_tick(scene, data::kRecordHz);
  const int ticks = static_cast<int>(std::floor(task.horizon_s * data::kRecordHz + 1e-9));

  RolloutResult result;
  auto& demo = result.observations;
  demo.header.task = task.name;
  demo.header.seed = seed;
  demo.header.stage = data::Stage::Replay;
  demo.header.record_hz = kPolicyHz;
  demo.header.finger_count = static_cast<int>(scene.fingers.size());
  demo.header.image_width = options.render_width;
  demo.header.image_height = options.render_height;
  demo.header.hand_spec_hash = data::hand_spec_hash(scene);
  demo.header.source = "policy";

  sim::Trajectory tr;
  tr.initial = scene;
  auto log_tick = [&] {
    tr.times.push_back(scene.time());
    std::vector<sim::Wrench> w;
    for (const auto& f : scene.fingers) w.push_back(f.wrench);
    tr.wrenches.push_back(std::move(w));
  };
  log_tick();
  demo.frames.push_back(observe(scene, 0, {}, options.render_width, options.render_height));

  std::vector<int> all(scene.fingers.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  std::vector<data::Frame> window;
  int tick = 0;
  try {
    while (tick < ticks) {
      window.clear();
      const int latest = static_cast<int>(demo.frames.size()) - 1;
      for (int h = cfg.obs_history - 1; h >= 0; --h) window.push_back(demo.frames[std::max(0, latest - h)]);
      const ActionChunk chunk = policy.predict(window);
      for (int a = 0; a < cfg.exec_horizon && tick < ticks; ++a) {
        const int age = a + 1;
        if (age > cfg.exec_horizon) throw std::logic_error("rollout executed a stale chunk entry");
        result.max_chunk_age = std::max(result.max_chunk_age, age);
        std::vector<Vec2> targets;
        for (const auto& per_finger : chunk.targets) targets.push_back(per_finger[a]);
        for (int k = 0; k < hold && tick < ticks; ++k) {
          control::run_control_period(scene, all, targets, options.gains, substeps);
          ++tick;
          log_tick();
        }
        demo.frames.push_back(observe(scene, tick / hold, targets, options.render_width, options.render_height));
      }
    }
  } catch (const sim::SimulationDiverged& e) {
    tr.diverged = true;
    tr.diagnostic = e.what();
    result.diagnostic = e.what();
  }
  tr.final = scene;
  const auto label = sim::label_outcome(task, tr);
  result.outcome = label.outcome;
  result.metrics = label.metrics;
  demo.header.outcome = sim::to_string(label.outcome);
  demo.header.metrics = label.metrics;
  return result;
}

}  // namespace dexforge::policy
