#include "ded/batch.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ded {

Normalizer Normalizer::fit(std::span<const Scene> scenes) {
  Normalizer n;
  std::array<double, kFeatureDim> sum{}, sq{};
  double count = 0.0;
  double end_sq = 0.0;
  double end_count = 0.0;
  double res_sq = 0.0;
  for (const auto& scene : scenes) {
    for (const auto& w : scene.windows) {
      for (const auto& f : w.history) {
        for (int j = 0; j < kFeatureDim; ++j) sum[j] += f[j];
        count += 1.0;
      }
      if (!w.future.empty()) {
        end_sq += w.future.back().x * w.future.back().x + w.future.back().y * w.future.back().y;
        end_count += 2.0;
        const Vec2 k = kinematic_endpoint(w, static_cast<int>(w.future.size()));
        const double dx = w.future.back().x - k.x, dy = w.future.back().y - k.y;
        res_sq += dx * dx + dy * dy;
      }
    }
  }
  if (count == 0.0) return n;
  for (int j = 0; j < kFeatureDim; ++j) n.mean[j] = sum[j] / count;
  for (const auto& scene : scenes) {
    for (const auto& w : scene.windows) {
      for (const auto& f : w.history) {
        for (int j = 0; j < kFeatureDim; ++j) sq[j] += (f[j] - n.mean[j]) * (f[j] - n.mean[j]);
      }
    }
  }
  for (int j = 0; j < kFeatureDim; ++j) n.scale[j] = std::max(std::sqrt(sq[j] / count), 1e-3);
  if (end_count > 0.0) {
    n.pos_scale = std::max(std::sqrt(end_sq / end_count), 1.0);
    n.ed_scale = std::max(std::sqrt(res_sq / end_count), 1.0);
  }
  return n;
}

Vec2 kinematic_endpoint(const TrajectoryWindow& w, int fut_len, double dt) {
  if (w.history.empty()) return {0.0, 0.0};
  const auto& last = w.history.back();
  const double horizon = fut_len * dt;
  return {last[0] + last[2] * horizon, last[1] + last[3] * horizon};
}

namespace {

double sorted_mean(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

Batch make_batch(std::span<const Scene* const> scenes, const Normalizer& norm) {
  Batch b;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (const auto& w : scenes[s]->windows) {
      b.windows.push_back(&w);
      b.scene_of.push_back(s);
    }
  }
  b.agents = static_cast<int>(b.windows.size());
  if (b.agents == 0) throw UsageError("batch has no agents");
  b.hist_len = static_cast<int>(b.windows.front()->history.size());
  b.fut_len = static_cast<int>(b.windows.front()->future.size());
  const int B = b.agents, T = b.hist_len, F = b.fut_len;

  b.history_time_major.resize(T * B, kFeatureDim);
  b.history_agent_major.resize(B * T, kFeatureDim);
  b.last_frame.resize(B, kFeatureDim);
  b.mask_time_major.assign(static_cast<std::size_t>(T * B), true);
  b.endpoint.resize(B, 2);
  b.ed_anchor.resize(B, 2);
  b.ed_target.resize(B, 2);
  b.future.resize(B * F, 2);
  b.neighbors.assign(static_cast<std::size_t>(B), {});
  b.neighbor_offset = Matrix::Zero(B, 2);

  int a = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const Scene& scene = *scenes[s];
    const int first = a;
    const int n = static_cast<int>(scene.windows.size());
    std::vector<bool> present(static_cast<std::size_t>(n), true);
    for (int i = 0; i < n; ++i) {
      const auto& w = scene.windows[static_cast<std::size_t>(i)];
      if (static_cast<int>(w.history.size()) != T || static_cast<int>(w.future.size()) != F) {
        throw DataError("inconsistent window lengths in batch");
      }
      const std::vector<bool>* mask =
          static_cast<std::size_t>(i) < scene.presence.size() ? &scene.presence[static_cast<std::size_t>(i)]
                                                              : nullptr;
      present[static_cast<std::size_t>(i)] = mask == nullptr || mask->empty() || mask->back();
      for (int t = 0; t < T; ++t) {
        const auto& f = w.history[static_cast<std::size_t>(t)];
        for (int j = 0; j < kFeatureDim; ++j) {
          if (!std::isfinite(f[j])) {
            throw NumericError("non-finite history value for agent " + std::to_string(w.agent_id) +
                               " at frame " + std::to_string(t));
          }
          const double v = (f[j] - norm.mean[j]) / norm.scale[j];
          b.history_time_major(t * B + a + i, j) = v;
          b.history_agent_major((a + i) * T + t, j) = v;
        }
        if (mask != nullptr && !mask->empty()) {
          b.mask_time_major[static_cast<std::size_t>(t * B + a + i)] = (*mask)[static_cast<std::size_t>(t)];
        }
      }
      b.last_frame.row(a + i) = b.history_agent_major.row((a + i) * T + T - 1);
      for (int t = 0; t < F; ++t) {
        const Vec2 p = w.future[static_cast<std::size_t>(t)];
        b.future((a + i) * F + t, 0) = p.x;
        b.future((a + i) * F + t, 1) = p.y;
      }
      b.endpoint(a + i, 0) = w.future.back().x / norm.pos_scale;
      b.endpoint(a + i, 1) = w.future.back().y / norm.pos_scale;
      const Vec2 k = kinematic_endpoint(w, F);
      b.ed_anchor(a + i, 0) = k.x;
      b.ed_anchor(a + i, 1) = k.y;
      b.ed_target(a + i, 0) = (w.future.back().x - k.x) / norm.ed_scale;
      b.ed_target(a + i, 1) = (w.future.back().y - k.y) / norm.ed_scale;
    }
    if (std::none_of(present.begin(), present.end(), [](bool p) { return p; })) {
      throw UsageError("presence mask excludes every agent of a scene");
    }
    for (int i = 0; i < n; ++i) {
      auto& nb = b.neighbors[static_cast<std::size_t>(first + i)];
      std::vector<double> xs, ys;
      for (int j = 0; j < n; ++j) {
        if (j == i || !present[static_cast<std::size_t>(j)]) continue;
        nb.push_back(first + j);
        xs.push_back(scene.windows[static_cast<std::size_t>(j)].origin.x);
        ys.push_back(scene.windows[static_cast<std::size_t>(j)].origin.y);
      }
      if (!nb.empty()) {
        const Vec2 own = scene.windows[static_cast<std::size_t>(i)].origin;
        b.neighbor_offset(first + i, 0) = (sorted_mean(xs) - own.x) / norm.pos_scale;
        b.neighbor_offset(first + i, 1) = (sorted_mean(ys) - own.y) / norm.pos_scale;
      }
    }
    a += n;
  }
  return b;
}

Batch make_batch(const Scene& scene, const Normalizer& norm) {
  const Scene* ptr = &scene;
  return make_batch(std::span<const Scene* const>(&ptr, 1), norm);
}

Batch make_window_batch(const TrajectoryWindow& window, const Normalizer& norm) {
  Scene scene;
  scene.windows.push_back(window);
  scene.presence.emplace_back(window.history.size(), true);
  scene.scene_origin = window.origin;
  Batch b = make_batch(scene, norm);
  b.windows.clear();  // points into the temporary scene
  return b;
}

}  // namespace ded
