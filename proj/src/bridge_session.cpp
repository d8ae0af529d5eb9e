#include "dexforge/bridge.hpp"

#include "dexforge/simulator.hpp"

#include <json.hpp>

#include <cmath>

namespace dexforge::bridge {

using ojson = nlohmann::ordered_json;

namespace {

ojson vec(const Vec2& v) { return ojson::array({v.x(), v.y()}); }

std::string dump(const ojson& j) { return j.dump(); }

}  // namespace

std::string error_message(const std::string& detail) { return dump({{"type", "error"}, {"detail", detail}}); }

Session::Session(std::string id, std::filesystem::path data_dir, bool lockstep)
    : data_dir_(std::move(data_dir)), lockstep_(lockstep) {
  state_.id = std::move(id);
}

std::string Session::snapshot() const {
  if (!scene_) throw ContractViolation("snapshot: no task has been reset");
  const sim::Scene& s = *scene_;
  ojson bodies = ojson::array();
  for (const auto& b : s.bodies)
    bodies.push_back({{"name", b.name}, {"position", vec(b.pose.position)}, {"angle", b.pose.angle}});
  ojson fingers = ojson::array();
  for (int i = 0; i < static_cast<int>(s.fingers.size()); ++i) {
    const auto& f = s.fingers[i];
    ojson joints = ojson::array();
    for (const auto& p : hand::joint_positions(f.chain, f.state.q)) joints.push_back(vec(p));
    fingers.push_back({{"tip", vec(sim::fingertip(s, i))},
                       {"joints", joints},
                       {"wrench", {{"force", vec(f.wrench.force)}, {"moment", f.wrench.moment}}},
                       {"handle", f.handle ? vec(f.handle->target) : ojson(nullptr)}});
  }
  return dump({{"type", "snapshot"},
               {"t", s.time()},
               {"bodies", bodies},
               {"fingers", fingers},
               {"recording", state_.recording}});
}

std::vector<std::string> Session::reset(const std::string& task, std::uint64_t seed) {
  std::vector<std::string> out;
  if (state_.recording) out.push_back(finish_recording(true));
  task_ = sim::builtin_task(task);
  scene_ = sim::reset_task(*task_, seed);
  stepper_ = std::make_unique<pipeline::KinestheticStepper>(*scene_);
  handles_.assign(scene_->fingers.size(), std::nullopt);
  state_.task = task;
  state_.seed = seed;
  state_.frame = 0;
  out.push_back(snapshot());
  return out;
}

void Session::start_recording() {
  if (!task_) throw ContractViolation("start_recording: reset a task first");
  if (state_.recording) throw ContractViolation("start_recording: already recording");
  // Recordings begin at the reset state so Stage 2 can reproduce the scene.
  scene_ = sim::reset_task(*task_, state_.seed);
  stepper_ = std::make_unique<pipeline::KinestheticStepper>(*scene_);
  handles_.assign(scene_->fingers.size(), std::nullopt);
  state_.frame = 0;
  record_start_ = *scene_;
  demo_ = {};
  demo_.header = pipeline::kinesthetic_header(*task_, state_.seed, *scene_, "live");
  demo_.frames.push_back(pipeline::kinesthetic_frame(*scene_, 0, {}));
  state_.recording = true;
}

std::string Session::finish_recording(bool truncated) {
  state_.recording = false;
  demo_.header.truncated = truncated;
  pipeline::attach_label(demo_.header, *task_, pipeline::sensor_trajectory(demo_, *record_start_, *scene_));
  if (const auto problems = data::validate(demo_); !problems.empty())
    throw ContractViolation("recording failed validation: " + problems.front());
  std::filesystem::create_directories(data_dir_);
  const std::string name = data::demo_file_name(demo_.header);
  const std::string stem = name.substr(0, name.size() - std::string(".demo.jsonl").size());
  std::filesystem::path path = data_dir_ / name;
  for (int n = 2; std::filesystem::exists(path); ++n) path = data_dir_ / (stem + "-" + std::to_string(n) + ".demo.jsonl");
  data::save(demo_, path);
  recordings_.push_back(path);
  record_start_.reset();
  return dump({{"type", "recorded"}, {"path", path.string()}, {"truncated", truncated}});
}

std::vector<std::string> Session::on_message(const std::string& text, double now) {
  state_.last_input = now;
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception&) {
    return {error_message("malformed message: not JSON")};
  }
  try {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
      return {error_message("malformed message: missing type")};
    const std::string type = j["type"].get<std::string>();
    if (type == "reset") {
      const auto task = j.at("task").get<std::string>();
      const auto seed = j.value("seed", std::uint64_t{0});
      return reset(task, seed);
    }
    if (type == "handle") {
      if (!scene_) return {error_message("handle: reset a task first")};
      const int finger = j.at("finger").get<int>();
      if (finger < 0 || finger >= static_cast<int>(handles_.size()))
        return {error_message("handle: no finger " + std::to_string(finger))};
      const auto& t = j.at("target");
      if (t.is_null()) {
        handles_[finger].reset();
        return {};
      }
      if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number())
        return {error_message("handle: target must be [x, y] or null")};
      const Vec2 target(t[0].get<double>(), t[1].get<double>());
      if (!target.allFinite()) return {error_message("handle: target must be finite")};
      handles_[finger] = target;
      return {};
    }
    if (type == "start_recording") {
      start_recording();
      return {snapshot()};
    }
    if (type == "stop_recording") {
      if (!state_.recording) return {error_message("stop_recording: not recording")};
      return {finish_recording(false)};
    }
    if (type == "list_tasks") return {dump({{"type", "tasks"}, {"tasks", sim::builtin_task_names()}})};
    if (type == "step") {
      if (!lockstep_) return {error_message("step: server is not in lockstep mode")};
      if (!scene_) return {error_message("step: reset a task first")};
      return on_tick(now);
    }
    return {error_message("unknown message type '" + type + "'")};
  } catch (const nlohmann::json::exception& e) {
    return {error_message(std::string("malformed message: ") + e.what())};
  } catch (const ContractViolation& e) {
    return {error_message(e.what())};
  }
}

std::vector<std::string> Session::on_tick(double now) {
  std::vector<std::string> out;
  if (!scene_) return out;
  if (state_.recording && now - state_.last_input > kSilenceTimeout) {
    out.push_back(finish_recording(true));
  }
  try {
    stepper_->step(handles_);
  } catch (const sim::SimulationDiverged& e) {
    if (state_.recording) out.push_back(finish_recording(true));
    out.push_back(error_message(std::string("simulation diverged, scene reset: ") + e.what()));
    for (auto& m : reset(state_.task, state_.seed)) out.push_back(std::move(m));
    return out;
  }
  ++state_.frame;
  if (state_.recording) {
    demo_.frames.push_back(pipeline::kinesthetic_frame(*scene_, state_.frame, handles_));
    if (static_cast<int>(demo_.frames.size()) >= pipeline::horizon_frames(*task_)) {
      out.push_back(snapshot());
      out.push_back(finish_recording(false));
      return out;
    }
  }
  out.push_back(snapshot());
  return out;
}

}  // namespace dexforge::bridge
