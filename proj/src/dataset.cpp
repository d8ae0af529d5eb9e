#include "dexforge/dataset.hpp"

#include <boost/beast/core/detail/base64.hpp>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace dexforge::data {

using ojson = nlohmann::ordered_json;
namespace b64 = boost::beast::detail::base64;

std::string to_string(Stage stage) { return stage == Stage::Kinesthetic ? "kinesthetic" : "replay"; }

Stage stage_from_string(const std::string& text) {
  if (text == "kinesthetic") return Stage::Kinesthetic;
  if (text == "replay") return Stage::Replay;
  throw ContractViolation("unknown stage '" + text + "'");
}

namespace {

// NaN and infinities are written as null; null reads back as NaN.
ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

double read_num(const ojson& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  return j.get<double>();
}

ojson vec(const Vec2& v) { return ojson::array({num(v.x()), num(v.y())}); }

Vec2 read_vec2(const ojson& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected a 2-vector");
  return {read_num(j[0]), read_num(j[1])};
}

ojson vecx(const VecX& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

VecX read_vecx(const ojson& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = read_num(j[i]);
  return v;
}

std::string encode_image(const sim::ByteImage& img) {
  std::string out(b64::encoded_size(img.pixels.size()), '\0');
  out.resize(b64::encode(out.data(), img.pixels.data(), img.pixels.size()));
  return out;
}

sim::ByteImage decode_image(const std::string& text, int w, int h) {
  sim::ByteImage img{w, h, {}};
  img.pixels.resize(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(img.pixels.data(), text.data(), text.size());
  // beast stops at the first '=', so padding is checked here
  size_t pad = 0;
  while (read + pad < text.size() && text[read + pad] == '=') ++pad;
  if (read + pad != text.size() || pad > 2 || text.size() % 4 != 0)
    throw std::invalid_argument("malformed base64 image");
  img.pixels.resize(written);
  if (img.pixels.size() != static_cast<size_t>(w) * h)
    throw std::invalid_argument("image size does not match the header dimensions");
  return img;
}

ojson header_json(const Header& h) {
  ojson j;
  j["format_version"] = h.format_version;
  j["task"] = h.task;
  j["seed"] = h.seed;
  j["stage"] = to_string(h.stage);
  j["record_hz"] = h.record_hz;
  j["finger_count"] = h.finger_count;
  j["image_width"] = h.image_width;
  j["image_height"] = h.image_height;
  j["hand_spec_hash"] = h.hand_spec_hash;
  j["source"] = h.source;
  if (h.extraction) j["extraction"] = {{"kf", num(h.extraction->kf)}, {"filter_window", h.extraction->filter_window}};
  else j["extraction"] = nullptr;
  j["truncated"] = h.truncated;
  j["outcome"] = h.outcome;
  ojson m = ojson::object();
  for (const auto& [k, v] : h.metrics) m[k] = num(v);
  j["metrics"] = m;
  return j;
}

Header read_header(const ojson& j) {
  Header h;
  h.format_version = j.at("format_version").get<int>();
  if (h.format_version != kFormatVersion)
    throw UnsupportedVersion("unsupported demonstration format_version " + std::to_string(h.format_version) +
                             " (this build reads version " + std::to_string(kFormatVersion) + ")");
  h.task = j.at("task").get<std::string>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.stage = stage_from_string(j.at("stage").get<std::string>());
  h.record_hz = j.at("record_hz").get<int>();
  h.finger_count = j.at("finger_count").get<int>();
  h.image_width = j.at("image_width").get<int>();
  h.image_height = j.at("image_height").get<int>();
  h.hand_spec_hash = j.at("hand_spec_hash").get<std::string>();
  h.source = j.at("source").get<std::string>();
  if (const auto& e = j.at("extraction"); !e.is_null())
    h.extraction = ExtractionInfo{read_num(e.at("kf")), e.at("filter_window").get<int>()};
  h.truncated = j.at("truncated").get<bool>();
  h.outcome = j.at("outcome").get<std::string>();
  for (const auto& [k, v] : j.at("metrics").items()) h.metrics[k] = read_num(v);
  return h;
}

ojson frame_json(const Frame& f) {
  ojson j;
  j["tick"] = f.tick;
  ojson fingers = ojson::array();
  for (const auto& s : f.fingers) {
    ojson fj;
    fj["x"] = vec(s.x);
    fj["q"] = vecx(s.q);
    fj["force"] = vec(s.wrench.force);
    fj["moment"] = num(s.wrench.moment);
    if (s.handle) fj["handle"] = vec(*s.handle);
    if (s.executed_target) fj["target"] = vec(*s.executed_target);
    fingers.push_back(std::move(fj));
  }
  j["fingers"] = std::move(fingers);
  if (f.image) j["image"] = encode_image(*f.image);
  return j;
}

Frame read_frame(const ojson& j, const Header& h) {
  Frame f;
  f.tick = j.at("tick").get<std::int64_t>();
  for (const auto& fj : j.at("fingers")) {
    FingerSample s;
    s.x = read_vec2(fj.at("x"));
    s.q = read_vecx(fj.at("q"));
    s.wrench.force = read_vec2(fj.at("force"));
    s.wrench.moment = read_num(fj.at("moment"));
    if (fj.contains("handle")) s.handle = read_vec2(fj["handle"]);
    if (fj.contains("target")) s.executed_target = read_vec2(fj["target"]);
    f.fingers.push_back(std::move(s));
  }
  if (j.contains("image")) f.image = decode_image(j["image"].get<std::string>(), h.image_width, h.image_height);
  return f;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_bits(const VecX& a, const VecX& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!same_bits(a[i], b[i])) return false;
  return true;
}

bool same_bits(const Vec2& a, const Vec2& b) { return same_bits(a.x(), b.x()) && same_bits(a.y(), b.y()); }

bool same_bits(const std::optional<Vec2>& a, const std::optional<Vec2>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || same_bits(*a, *b);
}

bool same_header(const Header& a, const Header& b) {
  Header x = a, y = b;
  const bool extraction_ok =
      x.extraction.has_value() == y.extraction.has_value() &&
      (!x.extraction || (same_bits(x.extraction->kf, y.extraction->kf) &&
                         x.extraction->filter_window == y.extraction->filter_window));
  if (!extraction_ok || x.metrics.size() != y.metrics.size()) return false;
  for (auto ia = x.metrics.begin(), ib = y.metrics.begin(); ia != x.metrics.end(); ++ia, ++ib)
    if (ia->first != ib->first || !same_bits(ia->second, ib->second)) return false;
  x.extraction.reset();
  y.extraction.reset();
  x.metrics.clear();
  y.metrics.clear();
  return x == y;
}

}  // namespace

bool identical(const Demonstration& a, const Demonstration& b) {
  if (!same_header(a.header, b.header) || a.frames.size() != b.frames.size()) return false;
  for (size_t k = 0; k < a.frames.size(); ++k) {
    const Frame& fa = a.frames[k];
    const Frame& fb = b.frames[k];
    if (fa.tick != fb.tick || fa.fingers.size() != fb.fingers.size() || fa.image != fb.image) return false;
    for (size_t i = 0; i < fa.fingers.size(); ++i) {
      const auto& sa = fa.fingers[i];
      const auto& sb = fb.fingers[i];
      if (!same_bits(sa.x, sb.x) || !same_bits(sa.q, sb.q) || !same_bits(sa.wrench.force, sb.wrench.force) ||
          !same_bits(sa.wrench.moment, sb.wrench.moment) || !same_bits(sa.handle, sb.handle) ||
          !same_bits(sa.executed_target, sb.executed_target))
        return false;
    }
  }
  return true;
}

std::string serialize(const Demonstration& demo) {
  std::string out = header_json(demo.header).dump();
  out += '\n';
  for (const auto& f : demo.frames) {
    out += frame_json(f).dump();
    out += '\n';
  }
  return out;
}

Demonstration parse(const std::string& text) {
  Demonstration demo;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const ojson j = ojson::parse(line);
      if (!have_header) {
        demo.header = read_header(j);
        have_header = true;
      } else {
        demo.frames.push_back(read_frame(j, demo.header));
      }
    } catch (const UnsupportedVersion&) {
      throw;
    } catch (const std::exception& e) {
      throw FormatError(line_no, e.what());
    }
  }
  if (!have_header) throw FormatError(line_no == 0 ? 1 : line_no, "missing header line");
  return demo;
}

void save(const Demonstration& demo, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize(demo);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Demonstration load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Demonstration downsample(const Demonstration& demo, int target_hz) {
  if (target_hz <= 0 || demo.header.record_hz % target_hz != 0)
    throw ContractViolation("downsample: " + std::to_string(demo.header.record_hz) +
                            " Hz is not divisible by " + std::to_string(target_hz) + " Hz");
  const int k = demo.header.record_hz / target_hz;
  Demonstration out;
  out.header = demo.header;
  out.header.record_hz = target_hz;
  for (size_t i = 0; i < demo.frames.size(); i += k) {
    Frame f = demo.frames[i];
    if (f.tick % k != 0) throw ContractViolation("downsample: frame tick not aligned to the new rate");
    f.tick /= k;
    out.frames.push_back(std::move(f));
  }
  return out;
}

std::vector<std::string> validate(const Demonstration& demo) {
  std::vector<std::string> v;
  const Header& h = demo.header;
  if (h.format_version != kFormatVersion) v.push_back("header: unsupported format_version");
  if (h.record_hz <= 0) v.push_back("header: record_hz must be positive");
  if (h.finger_count <= 0) v.push_back("header: finger_count must be positive");
  const bool replay = h.stage == Stage::Replay;
  if (replay && (h.image_width <= 0 || h.image_height <= 0))
    v.push_back("header: replay demonstrations need image dimensions");
  if (h.extraction && !(h.extraction->kf > 0.0)) v.push_back("header: extraction kf must be positive");

  std::vector<Eigen::Index> dofs;
  for (size_t k = 0; k < demo.frames.size(); ++k) {
    const Frame& f = demo.frames[k];
    const std::string where = "frame " + std::to_string(k);
    if (k > 0 && f.tick != demo.frames[k - 1].tick + 1)
      v.push_back(where + ": tick " + std::to_string(f.tick) + " breaks the 1/record_hz spacing");
    if (static_cast<int>(f.fingers.size()) != h.finger_count)
      v.push_back(where + ": finger count differs from the header");
    if (replay) {
      if (!f.image) v.push_back(where + ": replay frame is missing its image");
      else if (f.image->width != h.image_width || f.image->height != h.image_height ||
               f.image->pixels.size() != static_cast<size_t>(h.image_width) * h.image_height)
        v.push_back(where + ": image dimensions differ from the header");
    } else if (f.image) {
      v.push_back(where + ": kinesthetic frame carries an image");
    }
    for (size_t i = 0; i < f.fingers.size(); ++i) {
      const auto& s = f.fingers[i];
      const std::string fw = where + " finger " + std::to_string(i);
      if (!all_finite(s.x)) v.push_back(fw + ": non-finite x");
      if (!all_finite(s.q)) v.push_back(fw + ": non-finite q");
      if (!all_finite(s.wrench.force)) v.push_back(fw + ": non-finite force");
      if (!std::isfinite(s.wrench.moment)) v.push_back(fw + ": non-finite moment");
      if (s.handle && !all_finite(*s.handle)) v.push_back(fw + ": non-finite handle");
      if (s.executed_target && !all_finite(*s.executed_target)) v.push_back(fw + ": non-finite target");
      if (replay && !s.executed_target) v.push_back(fw + ": replay frame is missing its executed target");
      if (!replay && s.executed_target) v.push_back(fw + ": kinesthetic frame carries an executed target");
      if (dofs.size() <= i) dofs.push_back(s.q.size());
      else if (dofs[i] != s.q.size()) v.push_back(fw + ": joint count changes between frames");
    }
  }
  return v;
}

std::string hand_spec_hash(const sim::Scene& scene) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_d = [&](double d) { mix(&d, sizeof d); };
  for (const auto& f : scene.fingers) {
    const auto& c = f.chain;
    const std::int64_t n = c.num_joints();
    mix(&n, sizeof n);
    for (int j = 0; j < c.num_joints(); ++j) {
      mix_d(c.link_lengths[j]);
      mix_d(c.link_masses[j]);
      mix_d(c.link_com_offsets[j]);
      mix_d(c.joint_limits[j].lo);
      mix_d(c.joint_limits[j].hi);
    }
    mix_d(c.base_pose.position.x());
    mix_d(c.base_pose.position.y());
    mix_d(c.base_pose.angle);
    const std::int64_t s = c.sensor_link();
    mix(&s, sizeof s);
    mix_d(c.sensor_offset);
    mix_d(c.link_radius);
    mix_d(c.joint_damping);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string demo_file_name(const Header& header) {
  // naive replays of observed positions sit beside the force-informed ones
  const std::string stage = header.source == "replay-observed" ? "replay-observed" : to_string(header.stage);
  return header.task + "-" + stage + "-seed" + std::to_string(header.seed) + ".demo.jsonl";
}

std::vector<std::filesystem::path> list_demos(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 11 && name.ends_with(".demo.jsonl")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dexforge::data
