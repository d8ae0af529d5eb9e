#include "oracles.hpp"

#include "dexforge/bridge.hpp"
#include "dexforge/simulator.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <thread>

using namespace dexforge;
using json = nlohmann::json;

namespace {

namespace beast = boost::beast;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

const std::filesystem::path kGolden = DEXFORGE_GOLDEN_DIR;

json parse(const std::string& s) { return json::parse(s); }

bool is_vec2(const json& j) { return j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number(); }

// Structural check of every documented server message.
void check_schema(const std::string& text) {
  INFO(text);
  const json j = parse(text);
  REQUIRE(j.is_object());
  const std::string type = j.at("type");
  if (type == "snapshot") {
    CHECK(j.at("t").is_number());
    CHECK(j.at("recording").is_boolean());
    for (const auto& b : j.at("bodies")) {
      CHECK(b.at("name").is_string());
      CHECK(is_vec2(b.at("position")));
      CHECK(b.at("angle").is_number());
    }
    CHECK(!j.at("fingers").empty());
    for (const auto& f : j.at("fingers")) {
      CHECK(is_vec2(f.at("tip")));
      CHECK(f.at("joints").is_array());
      for (const auto& p : f.at("joints")) CHECK(is_vec2(p));
      CHECK(is_vec2(f.at("wrench").at("force")));
      CHECK(f.at("wrench").at("moment").is_number());
      CHECK((f.at("handle").is_null() || is_vec2(f.at("handle"))));
    }
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"bodies", "fingers", "recording", "t", "type"});  // sorted by json
  } else if (type == "recorded") {
    CHECK(j.at("path").is_string());
    CHECK(j.at("truncated").is_boolean());
  } else if (type == "tasks") {
    CHECK(j.at("tasks").is_array());
  } else if (type == "error") {
    CHECK(j.at("detail").is_string());
  } else {
    FAIL("undocumented message type " << type);
  }
}

std::vector<std::string> send(bridge::Session& s, const json& msg, double now) {
  auto out = s.on_message(msg.dump(), now);
  for (const auto& m : out) check_schema(m);
  return out;
}

json handle_msg(int finger, const std::optional<Vec2>& t) {
  return {{"type", "handle"}, {"finger", finger}, {"target", t ? json::array({t->x(), t->y()}) : json(nullptr)}};
}

struct Direct {
  data::Demonstration demo;
  std::vector<std::vector<std::optional<Vec2>>> handles;
};

Direct scripted(const std::string& task_name, std::uint64_t seed) {
  const auto task = sim::builtin_task(task_name);
  auto driver = pipeline::make_scripted_driver(task, seed);
  Direct d;
  d.demo = pipeline::record_kinesthetic(task, seed, *driver);
  d.handles = pipeline::handle_sequence(d.demo);
  return d;
}

bool same_frames(const data::Demonstration& a, const data::Demonstration& b) {
  data::Demonstration x = a, y = b;
  y.header = x.header;
  return data::identical(x, y);
}

// Minimal blocking websocket client.
class Client {
 public:
  explicit Client(std::uint16_t port) : ws_(io_) {
    tcp::resolver resolver(io_);
    asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  void send(const json& j) { ws_.write(asio::buffer(j.dump())); }
  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    const std::string text = beast::buffers_to_string(buf.data());
    check_schema(text);
    return parse(text);
  }
  json read_type(const std::string& type) {
    for (;;) {
      json j = read();
      if (j["type"] == type) return j;
    }
  }
  void close() { ws_.close(beast::websocket::close_code::normal); }

 private:
  asio::io_context io_;
  beast::websocket::stream<tcp::socket> ws_;
};

struct RunningServer {
  bridge::Server server;
  std::thread thread;
  explicit RunningServer(bridge::ServerOptions o) : server(std::move(o)), thread([this] { server.run(); }) {}
  ~RunningServer() {
    server.stop();
    thread.join();
  }
};

bridge::ServerOptions options(const std::filesystem::path& dir, bool lockstep) {
  bridge::ServerOptions o;
  o.port = 0;
  o.data_dir = dir;
  o.lockstep = lockstep;
  return o;
}

}  // namespace

TEST_CASE("a reset session with no input senses nothing") {
  bridge::Session s("a", oracle::temp_dir("bridge"));
  CHECK(s.on_tick(0.0).empty());
  const auto first = send(s, {{"type", "reset"}, {"task", "press-hold"}, {"seed", 4}}, 0.0);
  REQUIRE(first.size() == 1);
  for (int k = 1; k <= 60; ++k) {
    const auto out = s.on_tick(k / 30.0);
    REQUIRE(out.size() == 1);
    check_schema(out[0]);
    const json j = parse(out[0]);
    CHECK(j["t"].get<double>() == doctest::Approx(k / 30.0).epsilon(1e-12));
    for (const auto& f : j["fingers"]) {
      CHECK(f["wrench"]["force"] == json::array({0.0, 0.0}));
      CHECK(f["wrench"]["moment"] == 0.0);
    }
  }
  CHECK(s.state().frame == 60);
  CHECK(s.state().task == "press-hold");
}

TEST_CASE("snapshot wrenches are the sensed wrenches of that tick") {
  bridge::Session s("a", oracle::temp_dir("bridge"));
  const auto d = scripted("press-hold", 1000);
  send(s, {{"type", "reset"}, {"task", "press-hold"}, {"seed", 1000}}, 0.0);
  for (size_t k = 1; k < 90; ++k) {
    send(s, handle_msg(0, d.handles[k][0]), k / 30.0);
    const json j = parse(s.on_tick(k / 30.0).back());
    const auto w = sim::sense_wrench(*s.scene(), 0);
    CHECK(j["fingers"][0]["wrench"]["force"][0].get<double>() == w.force.x());
    CHECK(j["fingers"][0]["wrench"]["force"][1].get<double>() == w.force.y());
    CHECK(j["fingers"][0]["wrench"]["moment"].get<double>() == w.moment);
  }
}

TEST_CASE("a live recording equals the direct recording of the same handle stream") {
  for (const auto& [task, seed] : std::vector<std::pair<std::string, std::uint64_t>>{{"press-hold", 1000},
                                                                                     {"pinch-lift", 1001}}) {
    const auto d = scripted(task, seed);
    const auto dir = oracle::temp_dir("bridge-eq");
    bridge::Session s("a", dir);
    send(s, {{"type", "reset"}, {"task", task}, {"seed", seed}}, 0.0);
    // interaction before the recording starts is discarded
    send(s, handle_msg(0, Vec2(0.03, 0.08)), 0.0);
    s.on_tick(0.01);
    send(s, {{"type", "start_recording"}}, 0.02);
    std::vector<std::string> events;
    for (size_t k = 1; k < d.handles.size(); ++k) {
      const double now = 0.02 + k / 30.0;
      for (size_t i = 0; i < d.handles[k].size(); ++i) send(s, handle_msg(static_cast<int>(i), d.handles[k][i]), now);
      for (const auto& m : s.on_tick(now))
        if (parse(m)["type"] != "snapshot") events.push_back(m);
    }
    // a demonstration that runs to the horizon finishes itself
    const bool full = static_cast<int>(d.demo.frames.size()) == pipeline::horizon_frames(sim::builtin_task(task));
    if (!full) events = send(s, {{"type", "stop_recording"}}, 10.0);
    REQUIRE(events.size() == 1);
    const json rec = parse(events[0]);
    CHECK(rec["truncated"] == false);
    const auto live = data::load(rec["path"].get<std::string>());
    CHECK(live.header.source == "live");
    CHECK(live.header.outcome == d.demo.header.outcome);
    CHECK(same_frames(live, d.demo));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("client silence truncates a recording") {
  const auto dir = oracle::temp_dir("bridge-silent");
  bridge::Session s("a", dir);
  send(s, {{"type", "reset"}, {"task", "slide-cube"}, {"seed", 2}}, 0.0);
  send(s, {{"type", "start_recording"}}, 0.0);
  std::vector<std::string> events;
  for (int k = 1; k <= 45; ++k)
    for (const auto& m : s.on_tick(k / 30.0))
      if (parse(m)["type"] != "snapshot") events.push_back(m);
  REQUIRE(events.size() == 1);
  const json rec = parse(events[0]);
  CHECK(rec["type"] == "recorded");
  CHECK(rec["truncated"] == true);
  const auto demo = data::load(rec["path"].get<std::string>());
  CHECK(demo.header.truncated);
  CHECK(data::validate(demo).empty());
  CHECK(demo.frames.size() == 31);  // frames 0..30; the tick past 1 s cut it
  CHECK_FALSE(s.state().recording);
  // streaming continues
  CHECK(parse(s.on_tick(2.0).back())["type"] == "snapshot");
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed messages get an error and the session continues") {
  bridge::Session s("a", oracle::temp_dir("bridge"));
  auto err = [&](const std::string& text) {
    const auto out = s.on_message(text, 0.0);
    REQUIRE(out.size() == 1);
    check_schema(out[0]);
    const json j = parse(out[0]);
    CHECK(j["type"] == "error");
    return j["detail"].get<std::string>();
  };
  CHECK(err("not json") == "malformed message: not JSON");
  CHECK(err("{\"kind\":1}") == "malformed message: missing type");
  CHECK(err("{\"type\":\"handle\",\"finger\":0,\"target\":[0,0]}") == "handle: reset a task first");
  CHECK(err("{\"type\":\"fly\"}") == "unknown message type 'fly'");
  CHECK(err("{\"type\":\"step\"}") == "step: server is not in lockstep mode");
  send(s, {{"type", "reset"}, {"task", "flip-box"}}, 0.0);
  CHECK(err("{\"type\":\"handle\",\"finger\":7,\"target\":[0,0]}") == "handle: no finger 7");
  CHECK(err("{\"type\":\"handle\",\"finger\":0,\"target\":[0]}") == "handle: target must be [x, y] or null");
  CHECK(err("{\"type\":\"stop_recording\"}") == "stop_recording: not recording");
  CHECK(err("{\"type\":\"reset\",\"task\":\"juggle\"}").find("juggle") != std::string::npos);
  CHECK(err("{\"type\":\"reset\"}").rfind("malformed message", 0) == 0);
  send(s, {{"type", "start_recording"}}, 0.0);
  CHECK(err("{\"type\":\"start_recording\"}") == "start_recording: already recording");
  CHECK(parse(s.on_tick(0.1).back())["type"] == "snapshot");
  CHECK(s.state().recording);
}

TEST_CASE("sessions are isolated") {
  const auto dir = oracle::temp_dir("bridge-iso");
  bridge::Session a("a", dir), b("b", dir);
  send(a, {{"type", "reset"}, {"task", "press-hold"}, {"seed", 1}}, 0.0);
  send(b, {{"type", "reset"}, {"task", "press-hold"}, {"seed", 1}}, 0.0);
  send(a, {{"type", "start_recording"}}, 0.0);
  send(b, {{"type", "start_recording"}}, 0.0);
  const auto grip = sim::fingertip(*a.scene(), 0);
  for (int k = 1; k < 20; ++k) {
    send(a, handle_msg(0, grip + Vec2(0.0, -0.002 * k)), k / 30.0);
    send(b, {{"type", "list_tasks"}}, k / 30.0);
    a.on_tick(k / 30.0);
    b.on_tick(k / 30.0);
  }
  CHECK(sim::fingertip(*a.scene(), 0) != sim::fingertip(*b.scene(), 0));
  const auto ra = parse(send(a, {{"type", "stop_recording"}}, 1.0)[0]);
  const auto rb = parse(send(b, {{"type", "stop_recording"}}, 1.0)[0]);
  CHECK(ra["path"] != rb["path"]);  // same task and seed, second file gets a suffix
  const auto da = data::load(ra["path"].get<std::string>());
  const auto db = data::load(rb["path"].get<std::string>());
  CHECK_FALSE(same_frames(da, db));
  for (const auto& f : db.frames) CHECK_FALSE(f.fingers[0].handle.has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("golden session transcript") {
  // Lines starting with "> " are sent at 0.1 s intervals, "< " lines are the
  // expected replies in order. The data directory prints as <data>.
  const auto path = kGolden / "bridge" / "session.transcript";
  const std::string text = oracle::read_file(path);
  const auto dir = oracle::temp_dir("bridge-golden");
  bridge::Session s("golden", dir, true);
  std::string produced;
  std::istringstream in(text);
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("> ", 0) != 0) continue;
    produced += line + "\n";
    for (auto reply : s.on_message(line.substr(2), 0.1 * n++)) {
      check_schema(reply);
      for (auto p = reply.find(dir.string()); p != std::string::npos; p = reply.find(dir.string()))
        reply.replace(p, dir.string().size(), "<data>");
      produced += "< " + reply + "\n";
    }
  }
  if (std::getenv("DEXFORGE_UPDATE_GOLDEN")) oracle::write_file(path, produced);
  CHECK(produced == text);
  std::filesystem::remove_all(dir);
}

TEST_CASE("websocket lockstep recording matches the direct recording") {
  const auto dir = oracle::temp_dir("bridge-ws");
  RunningServer rs(options(dir, true));
  REQUIRE(rs.server.port() != 0);
  const auto d = scripted("press-hold", 1002);

  Client c(rs.server.port());
  c.send({{"type", "list_tasks"}});
  CHECK(c.read_type("tasks")["tasks"].size() == 4);
  c.send({{"type", "reset"}, {"task", "press-hold"}, {"seed", 1002}});
  c.read_type("snapshot");
  c.send({{"type", "start_recording"}});
  CHECK(c.read_type("snapshot")["recording"] == true);
  json last;
  for (size_t k = 1; k < d.handles.size(); ++k) {
    c.send(handle_msg(0, d.handles[k][0]));
    c.send({{"type", "step"}});
    last = c.read_type("snapshot");
  }
  CHECK(last["t"].get<double>() == doctest::Approx((d.handles.size() - 1) / 30.0));
  if (static_cast<int>(d.demo.frames.size()) < pipeline::horizon_frames(sim::builtin_task("press-hold")))
    c.send({{"type", "stop_recording"}});
  const json rec = c.read_type("recorded");
  CHECK(rec["truncated"] == false);
  const auto live = data::load(rec["path"].get<std::string>());
  CHECK(same_frames(live, d.demo));
  c.close();
  // the server saw the file too
  for (int i = 0; i < 100 && rs.server.recordings().empty(); ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  CHECK(rs.server.recordings().size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("websocket sessions stream in real time and stay independent") {
  const auto dir = oracle::temp_dir("bridge-rt");
  RunningServer rs(options(dir, false));
  Client a(rs.server.port()), b(rs.server.port());
  a.send({{"type", "reset"}, {"task", "press-hold"}, {"seed", 3}});
  b.send({{"type", "reset"}, {"task", "slide-cube"}, {"seed", 3}});
  double prev = -1.0;
  for (int k = 0; k < 10; ++k) {
    const json j = a.read_type("snapshot");
    const double t = j["t"];
    CHECK(t > prev);
    prev = t;
    CHECK(j["bodies"].size() == sim::reset_task(sim::builtin_task("press-hold"), 3).bodies.size());
  }
  CHECK(b.read_type("snapshot")["bodies"].size() == sim::reset_task(sim::builtin_task("slide-cube"), 3).bodies.size());
  // a silent recording is truncated after a second of no input
  a.send({{"type", "start_recording"}});
  const json rec = a.read_type("recorded");
  CHECK(rec["truncated"] == true);
  CHECK(data::validate(data::load(rec["path"].get<std::string>())).empty());
  a.close();
  b.close();
  std::filesystem::remove_all(dir);
}

TEST_CASE("static files are served over plain http") {
  const auto dir = oracle::temp_dir("bridge-ui");
  oracle::write_file(dir / "ui" / "index.html", "<html>hi</html>");
  auto o = options(dir, false);
  o.ui_dir = dir / "ui";
  RunningServer rs(o);
  auto get = [&](const std::string& target) {
    asio::io_context io;
    beast::tcp_stream stream(io);
    tcp::resolver resolver(io);
    stream.connect(resolver.resolve("127.0.0.1", std::to_string(rs.server.port())));
    beast::http::request<beast::http::empty_body> req{beast::http::verb::get, target, 11};
    req.set(beast::http::field::host, "127.0.0.1");
    beast::http::write(stream, req);
    beast::flat_buffer buf;
    beast::http::response<beast::http::string_body> res;
    beast::http::read(stream, buf, res);
    return res;
  };
  const auto ok = get("/");
  CHECK(ok.result() == beast::http::status::ok);
  CHECK(ok.body() == "<html>hi</html>");
  CHECK(ok[beast::http::field::content_type] == "text/html");
  CHECK(get("/missing.js").result() == beast::http::status::not_found);
  CHECK(get("/../secret").result() == beast::http::status::not_found);
  std::filesystem::remove_all(dir);
}
