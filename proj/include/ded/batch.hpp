#pragma once

#include "ded/nn/autograd.hpp"
#include "ded/types.hpp"

#include <array>
#include <span>
#include <vector>

namespace ded {

using nn::Matrix;

// Affine feature scaling fitted on the training split. Positions are
// measured in units of pos_scale inside the networks.
struct Normalizer {
  std::array<double, kFeatureDim> mean{};
  std::array<double, kFeatureDim> scale{1, 1, 1, 1, 1, 1};
  double pos_scale = 1.0;
  double ed_scale = 1.0;  // RMS of the endpoint minus its kinematic extrapolation

  static Normalizer fit(std::span<const Scene> scenes);
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

// Final position if the last observed velocity were held for the whole
// future. The diffusion model works on the offset from this point.
Vec2 kinematic_endpoint(const TrajectoryWindow& w, int fut_len, double dt = kDt);

// All agents of one or more scenes, laid out for the networks. Agent order
// follows the scenes, then the windows within each scene.
struct Batch {
  int agents = 0;
  int hist_len = 0;
  int fut_len = 0;
  Matrix history_time_major;   // (hist_len * agents) x 6, normalized
  Matrix history_agent_major;  // (agents * hist_len) x 6, normalized
  Matrix last_frame;           // agents x 6, normalized
  std::vector<bool> mask_time_major;
  std::vector<std::vector<Eigen::Index>> neighbors;
  Matrix neighbor_offset;  // agents x 2: mean neighbor origin minus own origin, / pos_scale
  Matrix endpoint;         // agents x 2: ground-truth final position, / pos_scale
  Matrix ed_anchor;        // agents x 2: kinematic endpoint, meters
  Matrix ed_target;        // agents x 2: (endpoint - ed_anchor) / ed_scale
  Matrix future;           // (agents * fut_len) x 2, meters
  std::vector<const TrajectoryWindow*> windows;
  std::vector<std::size_t> scene_of;  // index into the input scene list
};

// Throws UsageError when a scene has no agent present at the final history
// frame, NumericError naming the agent and frame on non-finite input.
Batch make_batch(std::span<const Scene* const> scenes, const Normalizer& norm);
Batch make_batch(const Scene& scene, const Normalizer& norm);
Batch make_window_batch(const TrajectoryWindow& window, const Normalizer& norm);

}  // namespace ded
