#include "dexforge/policy.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dexforge::policy {

using ojson = nlohmann::ordered_json;

namespace {

constexpr int kModelVersion = 1;

ojson matrix(const MatX& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

MatX read_matrix(const ojson& j) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  MatX m(rows, cols);
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows) throw ContractViolation("model file: row count mismatch");
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = data[r].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ContractViolation("model file: column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[c];
  }
  return m;
}

std::vector<double> vector_of(const VecX& v) { return {v.data(), v.data() + v.size()}; }

VecX read_vector(const ojson& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string Policy::to_json() const {
  std::vector<int> kinds;
  for (const auto k : layout_.kind) kinds.push_back(static_cast<int>(k));
  ojson j = {{"format_version", kModelVersion},
             {"action", to_string(action_)},
             {"fingers", fingers_},
             {"observation",
              {{"mode", to_string(obs_.mode)},
               {"proprioception", obs_.include_proprioception},
               {"binary_threshold", obs_.binary_threshold},
               {"image", {obs_.image_width, obs_.image_height}}}},
             {"policy",
              {{"obs_history", config_.obs_history},
               {"pred_horizon", config_.pred_horizon},
               {"exec_horizon", config_.exec_horizon},
               {"regressor", to_string(config_.regressor)},
               {"knn_k", config_.knn_k},
               {"image_weight", config_.image_weight},
               {"wrench_weight", config_.wrench_weight},
               {"ridge", config_.ridge}}},
             {"layout", {{"kind", kinds}, {"group", layout_.group}}},
             {"mean", vector_of(standardizer_.mean)},
             {"scale", vector_of(standardizer_.scale)},
             {"features", matrix(features_)},
             {"chunks", matrix(chunks_)},
             {"weights", matrix(weights_)}};
  return j.dump() + "\n";
}

Policy Policy::from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    if (j.at("format_version").get<int>() != kModelVersion)
      throw ContractViolation("model file: unsupported format_version");
    Policy p;
    p.action_ = action_type_from_string(j.at("action").get<std::string>());
    p.fingers_ = j.at("fingers").get<int>();
    const auto& o = j.at("observation");
    p.obs_.mode = obs_mode_from_string(o.at("mode").get<std::string>());
    p.obs_.include_proprioception = o.at("proprioception").get<bool>();
    p.obs_.binary_threshold = o.at("binary_threshold").get<double>();
    p.obs_.image_width = o.at("image").at(0).get<int>();
    p.obs_.image_height = o.at("image").at(1).get<int>();
    const auto& c = j.at("policy");
    p.config_.obs_history = c.at("obs_history").get<int>();
    p.config_.pred_horizon = c.at("pred_horizon").get<int>();
    p.config_.exec_horizon = c.at("exec_horizon").get<int>();
    p.config_.regressor = regressor_from_string(c.at("regressor").get<std::string>());
    p.config_.knn_k = c.at("knn_k").get<int>();
    p.config_.image_weight = c.at("image_weight").get<double>();
    p.config_.wrench_weight = c.at("wrench_weight").get<double>();
    p.config_.ridge = c.at("ridge").get<double>();
    p.obs_.validate();
    p.config_.validate();
    for (const int k : j.at("layout").at("kind").get<std::vector<int>>()) {
      if (k < 0 || k > 2) throw ContractViolation("model file: bad channel kind");
      p.layout_.kind.push_back(static_cast<Channel>(k));
    }
    p.layout_.group = j.at("layout").at("group").get<std::vector<int>>();
    p.standardizer_.mean = read_vector(j.at("mean"));
    p.standardizer_.scale = read_vector(j.at("scale"));
    p.features_ = read_matrix(j.at("features"));
    p.chunks_ = read_matrix(j.at("chunks"));
    p.weights_ = read_matrix(j.at("weights"));
    const auto width = static_cast<Eigen::Index>(p.layout_.size());
    if (p.layout_.group.size() != p.layout_.kind.size() || p.standardizer_.mean.size() != width ||
        p.standardizer_.scale.size() != width || p.features_.cols() != width ||
        p.features_.rows() != p.chunks_.rows() ||
        p.chunks_.cols() != static_cast<Eigen::Index>(p.fingers_) * p.config_.pred_horizon * 2)
      throw ContractViolation("model file: inconsistent dimensions");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("model file: ") + e.what());
  }
}

void Policy::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  out << to_json();
}

Policy Policy::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read model file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace dexforge::policy
