#pragma once

#include "ded/types.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

namespace ded::data {

enum class LengthUnit { feet, meters };
LengthUnit parse_unit(const std::string& s);

inline constexpr double kFeetToMeters = 0.3048;

struct IngestResult {
  std::vector<RawTrack> tracks;  // sorted by vehicle id
  std::size_t rejected_tracks = 0;
};

// Reads a headered NGSIM-style CSV (Vehicle_ID, Frame_ID, Local_X, Local_Y;
// names matched case-insensitively, other columns ignored). Malformed rows
// throw DataError naming the line. Tracks whose frames are not strictly
// increasing in file order are dropped and counted.
IngestResult ingest_csv(std::istream& in, LengthUnit unit);
IngestResult ingest_csv(const std::filesystem::path& path, LengthUnit unit);

// Keeps the points on even source frames (2x downsampling of a 10 Hz track).
std::vector<TrackPoint> downsample(const RawTrack& track);

// Per-frame (x, y, vx, vy, ax, ay) using backward differences; the first
// frame copies the second frame's derivatives.
std::vector<HistoryFrame> kinematics(const std::vector<Vec2>& positions, double dt);

struct WindowOptions {
  int hist_len = kHistLen;
  int fut_len = kFutLen;
  // Windows start on kept frames whose index (frame / 2) is a multiple of
  // the stride, so co-present vehicles produce aligned windows.
  int stride = 5;
};

struct WindowingResult {
  std::vector<TrajectoryWindow> windows;  // sorted by (agent id, end frame)
  std::size_t skipped_tracks = 0;         // too short for a single window
};

WindowingResult downsample_and_window(const std::vector<RawTrack>& tracks,
                                      const WindowOptions& options = {});

// Groups windows that share their final observation frame and are linked by
// last-position distance <= radius (transitively). Every member of a scene
// is a neighbor of every other.
std::vector<Scene> assemble_scenes(const std::vector<TrajectoryWindow>& windows,
                                   double radius = 50.0);

enum class ScenarioKind { constant_velocity, lane_change, follow_brake };
ScenarioKind parse_scenario_kind(const std::string& s);
std::string to_string(ScenarioKind kind);

// Lateral offset of the synthetic lane change at time t, given the maneuver
// start and time constant. Exposed for analytic checks.
double lane_change_offset(double t, double start, double tau, double width = 3.5);

std::vector<Scene> synth_scenarios(ScenarioKind kind, int n, std::uint64_t seed);

// Shuffles with the seed and partitions 70/20/10 by scene.
DatasetSplit split_dataset(const std::vector<Scene>& scenes, std::uint64_t seed);

// Stamps split tags onto the dataset's scenes (same partition as split_dataset).
void tag_splits(Dataset& dataset, std::uint64_t seed);
// Collects scenes by tag; throws DataError when the dataset is untagged.
DatasetSplit collect_splits(const Dataset& dataset);

}  // namespace ded::data
