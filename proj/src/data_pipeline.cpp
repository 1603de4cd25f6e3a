#include "ded/data_pipeline.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace ded::data {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_frame(std::string_view s, std::int64_t& out) {
  if (parse_number(s, out)) return true;
  // Some exports write integral columns as floats ("12.0").
  double d = 0.0;
  if (!parse_number(s, d) || !std::isfinite(d) || d != std::floor(d)) return false;
  out = static_cast<std::int64_t>(d);
  return true;
}

}  // namespace

LengthUnit parse_unit(const std::string& s) {
  const auto l = lower(s);
  if (l == "feet" || l == "ft") return LengthUnit::feet;
  if (l == "meters" || l == "m") return LengthUnit::meters;
  throw UsageError("unknown unit '" + s + "' (expected feet or meters)");
}

IngestResult ingest_csv(std::istream& in, LengthUnit unit) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;

  // Header.
  std::size_t col_id = 0, col_frame = 0, col_x = 0, col_y = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    int found = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto name = lower(std::string(fields[i]));
      if (name == "vehicle_id") col_id = i, ++found;
      if (name == "frame_id") col_frame = i, ++found;
      if (name == "local_x") col_x = i, ++found;
      if (name == "local_y") col_y = i, ++found;
    }
    if (found != 4) {
      throw DataError("line " + std::to_string(line_no) +
                      ": header must name Vehicle_ID, Frame_ID, Local_X, Local_Y");
    }
    have_header = true;
    break;
  }
  if (!have_header) return result;

  const std::size_t needed = std::max({col_id, col_frame, col_x, col_y}) + 1;
  const double factor = unit == LengthUnit::feet ? kFeetToMeters : 1.0;
  std::map<std::int64_t, std::vector<TrackPoint>> by_vehicle;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    auto fail = [&](const std::string& what) {
      throw DataError("line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() < needed) fail("expected at least " + std::to_string(needed) + " fields");
    std::int64_t id = 0, frame = 0;
    double x = 0.0, y = 0.0;
    if (!parse_frame(fields[col_id], id)) fail("bad Vehicle_ID '" + std::string(fields[col_id]) + "'");
    if (!parse_frame(fields[col_frame], frame)) {
      fail("bad Frame_ID '" + std::string(fields[col_frame]) + "'");
    }
    if (!parse_number(fields[col_x], x) || !std::isfinite(x)) {
      fail("bad Local_X '" + std::string(fields[col_x]) + "'");
    }
    if (!parse_number(fields[col_y], y) || !std::isfinite(y)) {
      fail("bad Local_Y '" + std::string(fields[col_y]) + "'");
    }
    by_vehicle[id].push_back(
        {frame, x * factor, y * factor, static_cast<double>(frame) * kSourceDt});
  }

  for (auto& [id, points] : by_vehicle) {
    std::stable_sort(points.begin(), points.end(),
                     [](const TrackPoint& a, const TrackPoint& b) { return a.frame < b.frame; });
    const bool duplicate =
        std::adjacent_find(points.begin(), points.end(), [](const TrackPoint& a, const TrackPoint& b) {
          return a.frame == b.frame;
        }) != points.end();
    if (duplicate) {
      ++result.rejected_tracks;
      continue;
    }
    result.tracks.push_back({id, std::move(points)});
  }
  return result;
}

IngestResult ingest_csv(const std::filesystem::path& path, LengthUnit unit) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return ingest_csv(in, unit);
}

std::vector<TrackPoint> downsample(const RawTrack& track) {
  std::vector<TrackPoint> kept;
  kept.reserve(track.points.size() / 2 + 1);
  for (const auto& p : track.points) {
    if (p.frame % 2 == 0) kept.push_back(p);
  }
  return kept;
}

std::vector<HistoryFrame> kinematics(const std::vector<Vec2>& positions, double dt) {
  const std::size_t n = positions.size();
  std::vector<HistoryFrame> out(n);
  std::vector<Vec2> vel(n), acc(n);
  for (std::size_t i = 1; i < n; ++i) vel[i] = (1.0 / dt) * (positions[i] - positions[i - 1]);
  if (n >= 2) vel[0] = vel[1];
  for (std::size_t i = 1; i < n; ++i) acc[i] = (1.0 / dt) * (vel[i] - vel[i - 1]);
  if (n >= 2) acc[0] = acc[1];
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {positions[i].x, positions[i].y, vel[i].x, vel[i].y, acc[i].x, acc[i].y};
  }
  return out;
}

WindowingResult downsample_and_window(const std::vector<RawTrack>& tracks,
                                      const WindowOptions& options) {
  if (options.hist_len < 2 || options.fut_len < 1 || options.stride < 1) {
    throw UsageError("window lengths must be hist >= 2, fut >= 1, stride >= 1");
  }
  const std::size_t total = static_cast<std::size_t>(options.hist_len + options.fut_len);
  WindowingResult result;
  for (const auto& track : tracks) {
    const auto kept = downsample(track);
    std::size_t emitted = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const std::int64_t slot = kept[i].frame / 2;
      if (((slot % options.stride) + options.stride) % options.stride != 0) continue;
      if (i + total > kept.size()) continue;
      bool contiguous = true;
      for (std::size_t j = i + 1; j < i + total; ++j) {
        if (kept[j].frame - kept[j - 1].frame != 2) {
          contiguous = false;
          break;
        }
      }
      if (!contiguous) continue;

      const std::size_t last = i + static_cast<std::size_t>(options.hist_len) - 1;
      TrajectoryWindow w;
      w.agent_id = track.vehicle_id;
      w.end_frame = kept[last].frame;
      w.end_time = kept[last].t;
      w.origin = {kept[last].x, kept[last].y};
      std::vector<Vec2> hist;
      hist.reserve(static_cast<std::size_t>(options.hist_len));
      for (std::size_t j = i; j <= last; ++j) hist.push_back(Vec2{kept[j].x, kept[j].y} - w.origin);
      w.history = kinematics(hist, kDt);
      for (std::size_t j = last + 1; j < i + total; ++j) {
        w.future.push_back(Vec2{kept[j].x, kept[j].y} - w.origin);
      }
      result.windows.push_back(std::move(w));
      ++emitted;
    }
    if (emitted == 0) ++result.skipped_tracks;
  }
  std::stable_sort(result.windows.begin(), result.windows.end(),
                   [](const TrajectoryWindow& a, const TrajectoryWindow& b) {
                     return a.agent_id != b.agent_id ? a.agent_id < b.agent_id
                                                     : a.end_frame < b.end_frame;
                   });
  return result;
}

std::vector<Scene> assemble_scenes(const std::vector<TrajectoryWindow>& windows, double radius) {
  if (!(radius >= 0.0)) throw UsageError("scene radius must be non-negative");
  std::map<std::int64_t, std::vector<const TrajectoryWindow*>> by_frame;
  for (const auto& w : windows) by_frame[w.end_frame].push_back(&w);

  std::vector<Scene> scenes;
  const double r2 = radius * radius;
  for (auto& [frame, group] : by_frame) {
    std::stable_sort(group.begin(), group.end(),
                     [](const auto* a, const auto* b) { return a->agent_id < b->agent_id; });
    const std::size_t n = group.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const Vec2 d = group[a]->origin - group[b]->origin;
        if (d.x * d.x + d.y * d.y <= r2) {
          const auto ra = find(a), rb = find(b);
          if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
        }
      }
    }
    std::map<std::size_t, Scene> components;  // keyed by smallest member index
    for (std::size_t i = 0; i < n; ++i) {
      Scene& s = components[find(i)];
      s.windows.push_back(*group[i]);
      s.presence.emplace_back(group[i]->history.size(), true);
    }
    for (auto& [root, scene] : components) {
      scene.scene_origin = scene.windows.front().origin;
      scenes.push_back(std::move(scene));
    }
  }
  return scenes;
}

ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "constant_velocity") return ScenarioKind::constant_velocity;
  if (s == "lane_change") return ScenarioKind::lane_change;
  if (s == "follow_brake") return ScenarioKind::follow_brake;
  throw UsageError("unknown scenario kind '" + s +
                   "' (expected constant_velocity, lane_change or follow_brake)");
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::constant_velocity: return "constant_velocity";
    case ScenarioKind::lane_change: return "lane_change";
    case ScenarioKind::follow_brake: return "follow_brake";
  }
  return "unknown";
}

double lane_change_offset(double t, double start, double tau, double width) {
  // Logistic rise over [start, start + 8 tau], rescaled to hit exactly 0 and
  // `width` at the ends.
  constexpr double kSpan = 4.0;
  if (t <= start) return 0.0;
  if (t >= start + 2.0 * kSpan * tau) return width;
  auto logistic = [](double u) { return 1.0 / (1.0 + std::exp(-u)); };
  const double lo = logistic(-kSpan);
  const double hi = logistic(kSpan);
  return width * (logistic((t - start) / tau - kSpan) - lo) / (hi - lo);
}

namespace {

constexpr int kSynthFrames = 80;  // 10 Hz source frames, 40 after downsampling
constexpr double kLaneWidth = 3.5;

template <class PositionFn>
RawTrack make_track(std::int64_t id, PositionFn&& position) {
  RawTrack track{id, {}};
  for (int f = 0; f < kSynthFrames; ++f) {
    const double t = f * kSourceDt;
    const Vec2 p = position(t);
    track.points.push_back({f, p.x, p.y, t});
  }
  return track;
}

Scene scene_from_tracks(const std::vector<RawTrack>& tracks) {
  WindowOptions opts;
  opts.stride = kHistLen + kFutLen;
  auto windowed = downsample_and_window(tracks, opts);
  Scene scene;
  for (auto& w : windowed.windows) {
    scene.presence.emplace_back(w.history.size(), true);
    scene.windows.push_back(std::move(w));
  }
  scene.scene_origin = scene.windows.front().origin;
  return scene;
}

}  // namespace

std::vector<Scene> synth_scenarios(ScenarioKind kind, int n, std::uint64_t seed) {
  if (n < 1) throw UsageError("synth needs n >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(n));

  for (int s = 0; s < n; ++s) {
    std::vector<RawTrack> tracks;
    const std::int64_t base_id = static_cast<std::int64_t>(s) * 16;
    switch (kind) {
      case ScenarioKind::constant_velocity: {
        const int agents = std::uniform_int_distribution<int>(1, 3)(rng);
        for (int a = 0; a < agents; ++a) {
          const double heading = uniform(-std::numbers::pi, std::numbers::pi);
          const double speed = uniform(5.0, 15.0);
          const Vec2 start{uniform(-30.0, 30.0), uniform(-30.0, 30.0)};
          const Vec2 vel{speed * std::cos(heading), speed * std::sin(heading)};
          tracks.push_back(make_track(base_id + a, [&](double t) { return start + t * vel; }));
        }
        break;
      }
      case ScenarioKind::lane_change: {
        // Ego in the middle lane changes to the free side; a second vehicle
        // occupies the lane on the other side.
        const double dir = uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
        const double speed = uniform(10.0, 20.0);
        const double start_time = kDt * std::uniform_int_distribution<int>(0, kHistLen - 1)(rng);
        const double tau = uniform(0.35, 0.6);
        const Vec2 ego0{uniform(0.0, 100.0), 0.0};
        tracks.push_back(make_track(base_id, [&](double t) {
          return Vec2{ego0.x + speed * t, dir * lane_change_offset(t, start_time, tau, kLaneWidth)};
        }));
        const double other_speed = speed + uniform(-1.0, 1.0);
        const Vec2 other0{ego0.x + uniform(-10.0, 10.0), -dir * kLaneWidth};
        tracks.push_back(make_track(base_id + 1, [&](double t) {
          return Vec2{other0.x + other_speed * t, other0.y};
        }));
        break;
      }
      case ScenarioKind::follow_brake: {
        // Leader brakes to a stop; the follower replays the leader's path
        // with a reaction delay and a spatial gap (Newell car following).
        const double v0 = uniform(10.0, 20.0);
        const double brake_at = uniform(1.0, 5.0);
        const double decel = uniform(2.0, 4.0);
        const double delay = 1.0;
        const double gap = uniform(8.0, 20.0);
        const double x0 = uniform(0.0, 100.0);
        auto leader_x = [=](double t) {
          if (t <= brake_at) return x0 + v0 * t;
          const double stop = v0 / decel;
          const double dt = std::min(t - brake_at, stop);
          return x0 + v0 * brake_at + v0 * dt - 0.5 * decel * dt * dt;
        };
        tracks.push_back(make_track(base_id, [&](double t) { return Vec2{leader_x(t), 0.0}; }));
        tracks.push_back(make_track(base_id + 1, [&](double t) {
          return Vec2{leader_x(t - delay) - gap, 0.0};
        }));
        break;
      }
    }
    scenes.push_back(scene_from_tracks(tracks));
  }
  return scenes;
}

namespace {

std::vector<SplitTag> split_tags(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw UsageError("split needs at least 10 scenes, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  std::vector<SplitTag> tags(n, SplitTag::test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      tags[order[i]] = SplitTag::train;
    } else if (i < n_train + n_val) {
      tags[order[i]] = SplitTag::val;
    }
  }
  return tags;
}

}  // namespace

DatasetSplit split_dataset(const std::vector<Scene>& scenes, std::uint64_t seed) {
  const auto tags = split_tags(scenes.size(), seed);
  DatasetSplit split;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Scene s = scenes[i];
    s.split = tags[i];
    switch (tags[i]) {
      case SplitTag::train: split.train.push_back(std::move(s)); break;
      case SplitTag::val: split.val.push_back(std::move(s)); break;
      default: split.test.push_back(std::move(s)); break;
    }
  }
  return split;
}

void tag_splits(Dataset& dataset, std::uint64_t seed) {
  const auto tags = split_tags(dataset.scenes.size(), seed);
  for (std::size_t i = 0; i < tags.size(); ++i) dataset.scenes[i].split = tags[i];
}

DatasetSplit collect_splits(const Dataset& dataset) {
  DatasetSplit split;
  for (const auto& s : dataset.scenes) {
    switch (s.split) {
      case SplitTag::train: split.train.push_back(s); break;
      case SplitTag::val: split.val.push_back(s); break;
      case SplitTag::test: split.test.push_back(s); break;
      case SplitTag::none: throw DataError("dataset has no split tags; run `split` first");
    }
  }
  return split;
}

}  // namespace ded::data
