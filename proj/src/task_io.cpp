#include "dexforge/task_io.hpp"

#include "dexforge/simulator.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dexforge::sim {

using ojson = nlohmann::ordered_json;

namespace {

ojson vec(const Vec2& v) { return ojson::array({v.x(), v.y()}); }

Vec2 read_vec(const ojson& j) {
  if (!j.is_array() || j.size() != 2) throw ContractViolation("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

ojson pose(const Pose2& p) { return {{"position", vec(p.position)}, {"angle", p.angle}}; }

Pose2 read_pose(const ojson& j) { return {read_vec(j.at("position")), j.at("angle").get<double>()}; }

ojson region(const PoseRegion& r) {
  return {{"x", {r.x_lo, r.x_hi}}, {"y", {r.y_lo, r.y_hi}}, {"angle", {r.angle_lo, r.angle_hi}}};
}

PoseRegion read_region(const ojson& j) {
  PoseRegion r;
  r.x_lo = j.at("x").at(0).get<double>();
  r.x_hi = j.at("x").at(1).get<double>();
  r.y_lo = j.at("y").at(0).get<double>();
  r.y_hi = j.at("y").at(1).get<double>();
  r.angle_lo = j.at("angle").at(0).get<double>();
  r.angle_hi = j.at("angle").at(1).get<double>();
  return r;
}

ojson params(const std::map<std::string, double>& m) {
  ojson o = ojson::object();
  for (const auto& [k, v] : m) o[k] = v;
  return o;
}

std::map<std::string, double> read_params(const ojson& j) {
  std::map<std::string, double> m;
  for (const auto& [k, v] : j.items()) m[k] = v.get<double>();
  return m;
}

ojson predicate(const Predicate& p) { return {{"rule", p.rule}, {"body", p.body}, {"params", params(p.params)}}; }

Predicate read_predicate(const ojson& j) {
  return {j.at("rule").get<std::string>(), j.value("body", std::string{}), read_params(j.value("params", ojson::object()))};
}

ojson ood(const OodOverrides& o) {
  return {{"mass_multiplier", params(o.mass_multiplier)}, {"region", o.region ? region(*o.region) : ojson(nullptr)}};
}

OodOverrides read_ood(const ojson& j) {
  OodOverrides o;
  o.mass_multiplier = read_params(j.value("mass_multiplier", ojson::object()));
  if (j.contains("region") && !j["region"].is_null()) o.region = read_region(j["region"]);
  return o;
}

ojson body(const Body& b) {
  ojson shape;
  if (const auto* c = std::get_if<Circle>(&b.shape)) {
    shape = {{"circle", c->radius}};
  } else {
    ojson verts = ojson::array();
    for (const auto& v : std::get<Polygon>(b.shape).vertices) verts.push_back(vec(v));
    shape = {{"polygon", verts}};
  }
  return {{"name", b.name},
          {"shape", shape},
          {"mass", b.mass},
          {"inertia", b.inertia},
          {"pose", pose(b.pose)},
          {"velocity", vec(b.velocity)},
          {"angular_velocity", b.angular_velocity},
          {"static", b.is_static},
          {"rail", b.rail ? ojson{{"axis", vec(b.rail->axis)}, {"mu", b.rail->mu}} : ojson(nullptr)}};
}

Body read_body(const ojson& j) {
  Body b;
  b.name = j.at("name").get<std::string>();
  const auto& shape = j.at("shape");
  if (shape.contains("circle")) {
    b.shape = Circle{shape["circle"].get<double>()};
  } else if (shape.contains("polygon")) {
    Polygon p;
    for (const auto& v : shape["polygon"]) p.vertices.push_back(read_vec(v));
    b.shape = p;
  } else {
    throw ContractViolation("body '" + b.name + "': shape must be circle or polygon");
  }
  b.mass = j.at("mass").get<double>();
  b.inertia = j.at("inertia").get<double>();
  b.pose = read_pose(j.at("pose"));
  b.velocity = read_vec(j.value("velocity", ojson::array({0.0, 0.0})));
  b.angular_velocity = j.value("angular_velocity", 0.0);
  b.is_static = j.value("static", false);
  if (j.contains("rail") && !j["rail"].is_null())
    b.rail = Rail{read_vec(j["rail"].at("axis")), j["rail"].at("mu").get<double>()};
  return b;
}

ojson finger(const Finger& f) {
  const auto& c = f.chain;
  ojson limits = ojson::array();
  for (const auto& l : c.joint_limits) limits.push_back({l.lo, l.hi});
  ojson q = ojson::array(), qdot = ojson::array();
  for (Eigen::Index i = 0; i < f.state.q.size(); ++i) {
    q.push_back(f.state.q[i]);
    qdot.push_back(f.state.qdot[i]);
  }
  return {{"link_lengths", c.link_lengths},
          {"link_masses", c.link_masses},
          {"link_com_offsets", c.link_com_offsets},
          {"joint_limits", limits},
          {"base", pose(c.base_pose)},
          {"sensor_link", c.sensor_link_index},
          {"sensor_offset", c.sensor_offset},
          {"link_radius", c.link_radius},
          {"joint_damping", c.joint_damping},
          {"q", q},
          {"qdot", qdot}};
}

Finger read_finger(const ojson& j) {
  Finger f;
  auto& c = f.chain;
  c.link_lengths = j.at("link_lengths").get<std::vector<double>>();
  c.link_masses = j.at("link_masses").get<std::vector<double>>();
  c.link_com_offsets = j.at("link_com_offsets").get<std::vector<double>>();
  for (const auto& l : j.at("joint_limits")) c.joint_limits.push_back({l.at(0).get<double>(), l.at(1).get<double>()});
  c.base_pose = read_pose(j.at("base"));
  c.sensor_link_index = j.value("sensor_link", -1);
  c.sensor_offset = j.value("sensor_offset", 0.0);
  c.link_radius = j.value("link_radius", c.link_radius);
  c.joint_damping = j.value("joint_damping", 0.0);
  const auto q = j.at("q").get<std::vector<double>>();
  const auto qdot = j.contains("qdot") ? j["qdot"].get<std::vector<double>>() : std::vector<double>(q.size(), 0.0);
  if (qdot.size() != q.size()) throw ContractViolation("finger: q and qdot differ in length");
  f.state.q = Eigen::Map<const VecX>(q.data(), static_cast<Eigen::Index>(q.size()));
  f.state.qdot = Eigen::Map<const VecX>(qdot.data(), static_cast<Eigen::Index>(qdot.size()));
  return f;
}

}  // namespace

std::string task_to_json(const TaskSpec& t) {
  const Scene& s = t.scene;
  ojson bodies = ojson::array(), fingers = ojson::array();
  for (const auto& b : s.bodies) bodies.push_back(body(b));
  for (const auto& f : s.fingers) fingers.push_back(finger(f));
  ojson scene = {{"dt", s.dt},
                 {"gravity", vec(s.gravity)},
                 {"contact",
                  {{"k_n", s.contact.k_n}, {"c_n", s.contact.c_n}, {"k_t", s.contact.k_t}, {"mu", s.contact.mu},
                   {"c_t", s.contact.c_t}}},
                 {"camera",
                  {{"x", {s.camera.x_min, s.camera.x_max}}, {"y", {s.camera.y_min, s.camera.y_max}}}},
                 {"bodies", bodies},
                 {"fingers", fingers}};
  ojson j = {{"format_version", kTaskFormatVersion},
             {"name", t.name},
             {"description", t.description},
             {"horizon_s", t.horizon_s},
             {"params", params(t.params)},
             {"scene", scene},
             {"init", {{"bodies", t.init.bodies}, {"region", region(t.init.region)}}},
             {"success", predicate(t.success)},
             {"partial", predicate(t.partial)},
             {"ood_variant", t.ood_variant ? ood(*t.ood_variant) : ojson(nullptr)},
             {"ood_overrides", t.ood_overrides ? ood(*t.ood_overrides) : ojson(nullptr)}};
  return j.dump(2) + "\n";
}

TaskSpec task_from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw ContractViolation(std::string("task file: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kTaskFormatVersion)
      throw ContractViolation("task file: unsupported format_version " + std::to_string(version));
    TaskSpec t;
    t.name = j.at("name").get<std::string>();
    t.description = j.value("description", std::string{});
    t.horizon_s = j.at("horizon_s").get<double>();
    t.params = read_params(j.value("params", ojson::object()));
    const auto& s = j.at("scene");
    t.scene.dt = s.at("dt").get<double>();
    t.scene.gravity = read_vec(s.at("gravity"));
    const auto& c = s.at("contact");
    t.scene.contact = {c.at("k_n").get<double>(), c.at("c_n").get<double>(), c.at("k_t").get<double>(),
                       c.at("mu").get<double>(), c.value("c_t", 0.0)};
    const auto& cam = s.at("camera");
    t.scene.camera = {cam.at("x").at(0).get<double>(), cam.at("x").at(1).get<double>(),
                      cam.at("y").at(0).get<double>(), cam.at("y").at(1).get<double>()};
    for (const auto& b : s.at("bodies")) t.scene.bodies.push_back(read_body(b));
    for (const auto& f : s.at("fingers")) t.scene.fingers.push_back(read_finger(f));
    t.init.bodies = j.at("init").at("bodies").get<std::vector<std::string>>();
    t.init.region = read_region(j.at("init").at("region"));
    t.success = read_predicate(j.at("success"));
    t.partial = read_predicate(j.at("partial"));
    if (j.contains("ood_variant") && !j["ood_variant"].is_null()) t.ood_variant = read_ood(j["ood_variant"]);
    if (j.contains("ood_overrides") && !j["ood_overrides"].is_null()) t.ood_overrides = read_ood(j["ood_overrides"]);
    if (!(t.horizon_s > 0.0)) throw ContractViolation("task file: horizon_s must be positive");
    for (const auto& name : t.init.bodies) body_index(t.scene, name);
    validate_scene(t.scene);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ContractViolation(std::string("task file: ") + e.what());
  }
}

void save_task(const TaskSpec& task, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write " + path.string());
  out << task_to_json(task);
}

TaskSpec load_task(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractViolation("cannot read task file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return task_from_json(ss.str());
  } catch (const ContractViolation& e) {
    throw ContractViolation(path.string() + ": " + e.what());
  }
}

TaskSpec resolve_task(const std::string& name_or_path) {
  if (name_or_path.ends_with(".json") || name_or_path.find('/') != std::string::npos)
    return load_task(name_or_path);
  return builtin_task(name_or_path);
}

void set_param(TaskSpec& task, const std::string& key, double value) {
  const auto it = task.params.find(key);
  if (it == task.params.end()) throw ContractViolation("task '" + task.name + "' has no parameter '" + key + "'");
  it->second = value;
  for (Predicate* p : {&task.success, &task.partial})
    if (auto q = p->params.find(key); q != p->params.end()) q->second = value;
}

}  // namespace dexforge::sim
