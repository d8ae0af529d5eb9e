#pragma once

// Live kinesthetic teaching over a websocket. Each connection owns one
// Session: an isolated simulation driven by client handle targets, streamed
// back as 30 Hz snapshots, that can record a kinesthetic demonstration.
//
// Client -> server, one JSON object per message:
//   {"type":"reset","task":T,"seed":S}
//   {"type":"handle","finger":i,"target":[x,y]}     target null releases
//   {"type":"start_recording"}  {"type":"stop_recording"}  {"type":"list_tasks"}
//   {"type":"step"}                                  lockstep servers only
// Server -> client:
//   {"type":"snapshot","t","bodies":[{"name","position","angle"}],
//    "fingers":[{"tip","joints","wrench":{"force","moment"},"handle"}],"recording"}
//   {"type":"recorded","path","truncated"}  {"type":"tasks","tasks"}  {"type":"error","detail"}

#include "dexforge/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dexforge::bridge {

inline constexpr std::uint16_t kDefaultPort = 8724;
/// Client silence (s) after which an active recording is cut short.
inline constexpr double kSilenceTimeout = 1.0;

struct SessionState {
  std::string id;
  std::string task;
  std::uint64_t seed{0};
  bool recording{false};
  /// Seconds on the session clock of the last client message.
  double last_input{0.0};
  /// Control ticks since the last reset.
  std::int64_t frame{0};
};

class Session {
 public:
  Session(std::string id, std::filesystem::path data_dir, bool lockstep = false);

  /// Handles one client message at session time `now`; returns the replies.
  std::vector<std::string> on_message(const std::string& text, double now);
  /// Advances one control tick; returns the snapshot and any event.
  std::vector<std::string> on_tick(double now);

  const SessionState& state() const { return state_; }
  const sim::Scene* scene() const { return scene_ ? &*scene_ : nullptr; }
  std::vector<std::filesystem::path> recordings() const { return recordings_; }
  std::string snapshot() const;

 private:
  std::vector<std::string> reset(const std::string& task, std::uint64_t seed);
  void start_recording();
  std::string finish_recording(bool truncated);

  std::filesystem::path data_dir_;
  bool lockstep_;
  SessionState state_;
  std::optional<sim::TaskSpec> task_;
  std::optional<sim::Scene> scene_;
  std::unique_ptr<pipeline::KinestheticStepper> stepper_;
  std::vector<std::optional<Vec2>> handles_;
  data::Demonstration demo_;
  std::optional<sim::Scene> record_start_;
  std::vector<std::filesystem::path> recordings_;
};

std::string error_message(const std::string& detail);

struct ServerOptions {
  std::string address{"127.0.0.1"};
  /// 0 binds an ephemeral port.
  std::uint16_t port{kDefaultPort};
  std::filesystem::path data_dir{"."};
  /// Static files served over plain HTTP on the same port.
  std::optional<std::filesystem::path> ui_dir;
  /// Ticks advance only on client "step" messages.
  bool lockstep{false};
  /// Stop after this many recordings have been written; 0 never stops.
  int max_recordings{0};
  std::function<void(const std::string&)> log;
};

class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bound port (resolved when options.port is 0).
  std::uint16_t port() const;
  /// Serves until stop() or the recording budget is spent.
  void run();
  /// Safe from any thread.
  void stop();
  std::vector<std::filesystem::path> recordings() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace dexforge::bridge
