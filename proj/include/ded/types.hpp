#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ded {

inline constexpr double kSourceDt = 0.1;  // NGSIM sampling period, seconds
inline constexpr double kDt = 0.2;        // after 2x downsampling
inline constexpr int kHistLen = 15;
inline constexpr int kFutLen = 25;
inline constexpr int kFeatureDim = 6;  // x, y, vx, vy, ax, ay

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }

struct TrackPoint {
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;  // seconds

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct RawTrack {
  std::int64_t vehicle_id = 0;
  std::vector<TrackPoint> points;  // strictly increasing frame
};

using HistoryFrame = std::array<double, kFeatureDim>;

// One agent's aligned history and future, centered on the last observed
// position. Frame counts are fixed by the dataset header (15/25 by default).
struct TrajectoryWindow {
  std::int64_t agent_id = 0;
  std::int64_t end_frame = 0;  // source frame index of the last history point
  double end_time = 0.0;       // seconds
  Vec2 origin;                 // global position of the last history point
  std::vector<HistoryFrame> history;
  std::vector<Vec2> future;

  friend bool operator==(const TrajectoryWindow&, const TrajectoryWindow&) = default;
};

enum class SplitTag : std::uint8_t { none = 0, train = 1, val = 2, test = 3 };

struct Scene {
  std::vector<TrajectoryWindow> windows;
  // presence[agent][frame]; true where the agent's source track exists.
  std::vector<std::vector<bool>> presence;
  Vec2 scene_origin;
  SplitTag split = SplitTag::none;

  std::size_t size() const { return windows.size(); }
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Dataset {
  std::string id;  // "ngsim" for ingested CSVs, "synthetic:<kind>" otherwise
  double dt = kDt;
  int hist_len = kHistLen;
  int fut_len = kFutLen;
  std::vector<Scene> scenes;

  std::size_t window_count() const {
    std::size_t n = 0;
    for (const auto& s : scenes) n += s.size();
    return n;
  }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetSplit {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;
};

}  // namespace ded
