#include "dexforge/pipeline.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace dexforge::pipeline {

using ojson = nlohmann::ordered_json;

std::string trajectory_to_json(const ForceInformedTrajectory& t) {
  ojson targets = ojson::array();
  for (const auto& finger : t.targets) {
    ojson seq = ojson::array();
    for (const auto& x : finger) {
      if (!x.allFinite()) throw ContractViolation("trajectory holds a non-finite target");
      seq.push_back({x.x(), x.y()});
    }
    targets.push_back(std::move(seq));
  }
  ojson j = {{"format_version", data::kFormatVersion},
             {"source", t.source_id},
             {"task", t.task},
             {"seed", t.seed},
             {"kf", t.kf},
             {"filter_window", t.filter_window},
             {"record_hz", t.record_hz},
             {"targets", targets}};
  return j.dump() + "\n";
}

ForceInformedTrajectory trajectory_from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != data::kFormatVersion)
      throw data::UnsupportedVersion("targets file: unsupported format_version " + std::to_string(version));
    ForceInformedTrajectory t;
    t.source_id = j.at("source").get<std::string>();
    t.task = j.at("task").get<std::string>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.kf = j.at("kf").get<double>();
    t.filter_window = j.at("filter_window").get<int>();
    t.record_hz = j.at("record_hz").get<int>();
    for (const auto& finger : j.at("targets")) {
      std::vector<Vec2> seq;
      for (const auto& x : finger) seq.emplace_back(x.at(0).get<double>(), x.at(1).get<double>());
      t.targets.push_back(std::move(seq));
    }
    for (const auto& seq : t.targets)
      if (seq.size() != t.length()) throw ContractViolation("targets file: fingers differ in length");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("targets file: ") + e.what());
  }
}

void save_trajectory(const ForceInformedTrajectory& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  out << trajectory_to_json(t);
}

ForceInformedTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trajectory_from_json(ss.str());
}

std::string trajectory_file_name(const ForceInformedTrajectory& t) {
  return t.task + (t.kf > 0.0 ? "-targets" : "-observed") + "-seed" + std::to_string(t.seed) + ".targets.json";
}

}  // namespace dexforge::pipeline
