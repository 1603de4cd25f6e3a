#pragma once

#include "ded/model.hpp"
#include "ded/training.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ded {

inline constexpr int kHorizons = 5;
// Future frame (1-based) scored at each whole second.
inline constexpr std::array<int, kHorizons> kHorizonFrames{5, 10, 15, 20, 25};
// Published full-model RMSE on NGSIM at 1..5 s, meters.
inline constexpr std::array<double, kHorizons> kNgsimTargets{0.32, 0.83, 1.59, 2.46, 3.52};

enum class EvalMode { calibrated, best_of_C };
EvalMode parse_eval_mode(const std::string& s);
std::string to_string(EvalMode mode);

inline constexpr int kReportSchemaVersion = 1;

struct RmseReport {
  int schema_version = kReportSchemaVersion;
  std::array<double, kHorizons> rmse{};
  std::uint64_t n_windows = 0;
  std::string model;  // variant name, or "cv_kalman"
  std::string mode;   // "calibrated", "best_of_C" or "baseline"
  std::string dataset_id;
  std::uint64_t param_count = 0;
  double macs_per_scene = 0.0;
  std::optional<std::array<double, kHorizons>> targets;  // set for NGSIM data

  friend bool operator==(const RmseReport&, const RmseReport&) = default;
};

// Per-window predicted and true positions, each at least 25 x 2.
// RMSE at horizon h is sqrt(mean over windows of the squared Euclidean
// error at frame 5h).
RmseReport rmse_at_horizons(const std::vector<Matrix>& preds, const std::vector<Matrix>& truths);

struct KalmanOptions {
  double accel_sigma = 1.0;  // process noise, m/s^2
  double obs_sigma = 0.5;    // observation noise, m
  double dt = kDt;
};

// Constant-velocity Kalman filter over the history positions, then
// propagation of the final state. Returns fut_len x 2, window frame.
Matrix cv_baseline(const TrajectoryWindow& window, const KalmanOptions& options, int fut_len = kFutLen);
// Two-point extrapolation from the last two history positions.
Matrix two_point_baseline(const TrajectoryWindow& window, double dt, int fut_len = kFutLen);

Matrix future_matrix(const TrajectoryWindow& window);

RmseReport evaluate_baseline(const std::vector<Scene>& scenes, const KalmanOptions& options,
                             const std::string& dataset_id = "");

// Full inference over every agent of every scene. Scenes are scored on up
// to `threads` workers and reduced in scene order.
RmseReport evaluate(const Model& model, const std::vector<Scene>& scenes, EvalMode mode,
                    Variant variant, std::uint64_t seed, const std::string& dataset_id = "",
                    int threads = 1);

// Checks that the dataset windows match the checkpoint before scoring.
RmseReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& dataset,
                               const std::vector<Scene>& scenes, EvalMode mode, int threads = 1);

// Worker count from DED_THREADS, else the hardware concurrency.
int worker_threads();

struct AblationRow {
  Variant variant = Variant::full;
  std::vector<RmseReport> runs;  // one per seed
  std::array<double, kHorizons> mean_rmse{};
};

// Trains and scores every variant for seeds seed0 .. seed0 + n_seeds - 1.
std::vector<AblationRow> run_ablation(const DatasetSplit& split, const Config& config,
                                      const std::string& dataset_id, int n_seeds,
                                      std::ostream* progress = nullptr, int threads = 1);

}  // namespace ded
