#pragma once

// Demonstration container and its line-delimited JSON file format
// (.demo.jsonl). The first line is the header, each further line one frame.

#include "dexforge/raster.hpp"
#include "dexforge/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dexforge::data {

inline constexpr int kFormatVersion = 1;
inline constexpr int kRecordHz = 30;

enum class Stage { Kinesthetic, Replay };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& text);

struct ExtractionInfo {
  double kf{1.0 / 220.0};
  int filter_window{1};

  bool operator==(const ExtractionInfo&) const = default;
};

struct Header {
  int format_version{kFormatVersion};
  std::string task;
  std::uint64_t seed{0};
  Stage stage{Stage::Kinesthetic};
  int record_hz{kRecordHz};
  int finger_count{0};
  int image_width{0};
  int image_height{0};
  std::string hand_spec_hash;
  /// Producer of the recording: a scripted driver name, "live", or "replay".
  std::string source;
  std::optional<ExtractionInfo> extraction;
  /// Set when a live recording was cut short by client silence.
  bool truncated{false};
  /// Outcome label of the run that produced the recording, when known.
  std::string outcome;
  std::map<std::string, double> metrics;

  bool operator==(const Header&) const = default;
};

struct FingerSample {
  /// Observed fingertip position.
  Vec2 x{Vec2::Zero()};
  VecX q;
  /// Object-on-finger wrench at the sensor.
  sim::Wrench wrench;
  /// Kinesthetic: operator handle target held over the preceding period.
  std::optional<Vec2> handle;
  /// Replay: impedance target that produced this state.
  std::optional<Vec2> executed_target;
};

struct Frame {
  /// Time is tick / record_hz.
  std::int64_t tick{0};
  std::vector<FingerSample> fingers;
  std::optional<sim::ByteImage> image;
};

struct Demonstration {
  Header header;
  std::vector<Frame> frames;

  double time(size_t k) const {
    return static_cast<double>(frames.at(k).tick) / header.record_hz;
  }
};

/// Bitwise equality of every field (NaN compares equal to the same NaN).
bool identical(const Demonstration& a, const Demonstration& b);

class UnsupportedVersion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& detail)
      : std::runtime_error("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string serialize(const Demonstration& demo);
Demonstration parse(const std::string& text);

void save(const Demonstration& demo, const std::filesystem::path& path);
Demonstration load(const std::filesystem::path& path);

/// Keeps frames 0, k, 2k, ... with k = record_hz / target_hz.
Demonstration downsample(const Demonstration& demo, int target_hz);

/// Empty when valid; otherwise one message per violation.
std::vector<std::string> validate(const Demonstration& demo);

/// Stable fingerprint of every finger chain of a scene.
std::string hand_spec_hash(const sim::Scene& scene);

/// Standard file name "<task>-<stage>-seed<seed>.demo.jsonl"; observed-position
/// replays use the stage name "replay-observed".
std::string demo_file_name(const Header& header);

/// Every *.demo.jsonl under `dir`, sorted by file name.
std::vector<std::filesystem::path> list_demos(const std::filesystem::path& dir);

}  // namespace dexforge::data
