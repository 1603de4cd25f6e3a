#include "ded/evaluation.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ostream>
#include <thread>

namespace ded {

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "calibrated") return EvalMode::calibrated;
  if (s == "best_of_C") return EvalMode::best_of_C;
  throw UsageError("unknown eval mode '" + s + "' (expected calibrated or best_of_C)");
}

std::string to_string(EvalMode mode) { return mode == EvalMode::calibrated ? "calibrated" : "best_of_C"; }

namespace {

// Squared error per horizon for one window.
using HorizonErrors = std::array<double, kHorizons>;

HorizonErrors squared_errors(const Matrix& pred, const Matrix& truth) {
  HorizonErrors e{};
  for (int h = 0; h < kHorizons; ++h) {
    const int r = kHorizonFrames[static_cast<std::size_t>(h)] - 1;
    const double dx = pred(r, 0) - truth(r, 0);
    const double dy = pred(r, 1) - truth(r, 1);
    e[static_cast<std::size_t>(h)] = dx * dx + dy * dy;
  }
  return e;
}

RmseReport reduce(const std::vector<HorizonErrors>& errors) {
  if (errors.empty()) throw UsageError("no windows to score");
  RmseReport r;
  for (int h = 0; h < kHorizons; ++h) {
    double acc = 0.0;
    for (const auto& e : errors) acc += e[static_cast<std::size_t>(h)];
    r.rmse[static_cast<std::size_t>(h)] = std::sqrt(acc / static_cast<double>(errors.size()));
  }
  r.n_windows = errors.size();
  return r;
}

void check_future(const Matrix& m) {
  if (m.cols() != 2 || m.rows() < kHorizonFrames.back()) {
    throw UsageError("trajectories must have at least " + std::to_string(kHorizonFrames.back()) +
                     " rows of 2 columns");
  }
}

std::vector<HorizonErrors> score_scene(const Model& model, const Scene& scene, EvalMode mode,
                                       Variant variant, std::uint64_t seed) {
  const auto preds = model.predict(scene, variant, seed);
  std::vector<HorizonErrors> out;
  out.reserve(preds.size());
  std::vector<std::vector<Matrix>> all;
  if (mode == EvalMode::best_of_C) all = model.decode_all_candidates(scene);
  for (std::size_t a = 0; a < preds.size(); ++a) {
    const Matrix truth = future_matrix(scene.windows[a]);
    HorizonErrors e = squared_errors(preds[a].trajectory.mu, truth);
    if (mode == EvalMode::best_of_C) {
      for (const auto& cand : all[a]) {
        const HorizonErrors c = squared_errors(cand, truth);
        for (int h = 0; h < kHorizons; ++h) {
          e[static_cast<std::size_t>(h)] = std::min(e[static_cast<std::size_t>(h)], c[static_cast<std::size_t>(h)]);
        }
      }
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace

Matrix future_matrix(const TrajectoryWindow& window) {
  Matrix m(static_cast<Eigen::Index>(window.future.size()), 2);
  for (std::size_t i = 0; i < window.future.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = window.future[i].x;
    m(static_cast<Eigen::Index>(i), 1) = window.future[i].y;
  }
  return m;
}

RmseReport rmse_at_horizons(const std::vector<Matrix>& preds, const std::vector<Matrix>& truths) {
  if (preds.size() != truths.size()) throw UsageError("prediction and ground-truth counts differ");
  std::vector<HorizonErrors> errors;
  errors.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_future(preds[i]);
    check_future(truths[i]);
    errors.push_back(squared_errors(preds[i], truths[i]));
  }
  return reduce(errors);
}

Matrix cv_baseline(const TrajectoryWindow& window, const KalmanOptions& options, int fut_len) {
  const std::size_t n = window.history.size();
  if (n < 2) throw UsageError("Kalman baseline needs at least two history frames");
  const double dt = options.dt;
  const double r2 = options.obs_sigma * options.obs_sigma;
  const double q = options.accel_sigma * options.accel_sigma;

  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  A(0, 2) = dt;
  A(1, 3) = dt;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  const double q11 = q * dt * dt * dt * dt / 4.0, q12 = q * dt * dt * dt / 2.0, q22 = q * dt * dt;
  for (int axis = 0; axis < 2; ++axis) {
    Q(axis, axis) = q11;
    Q(axis, axis + 2) = q12;
    Q(axis + 2, axis) = q12;
    Q(axis + 2, axis + 2) = q22;
  }
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const Eigen::Matrix2d R = r2 * Eigen::Matrix2d::Identity();

  auto obs = [&](std::size_t i) { return Eigen::Vector2d(window.history[i][0], window.history[i][1]); };

  // Two-point start: position from the second observation, velocity from
  // the first difference.
  Eigen::Vector4d x;
  x << obs(1), (obs(1) - obs(0)) / dt;
  Eigen::Matrix4d P = Eigen::Matrix4d::Zero();
  P(0, 0) = P(1, 1) = r2;
  P(2, 2) = P(3, 3) = 2.0 * r2 / (dt * dt);
  P(0, 2) = P(2, 0) = P(1, 3) = P(3, 1) = r2 / dt;

  for (std::size_t i = 2; i < n; ++i) {
    x = A * x;
    P = A * P * A.transpose() + Q;
    const Eigen::Vector2d innovation = obs(i) - H * x;
    const Eigen::Matrix2d S = H * P * H.transpose() + R;
    const Eigen::Matrix<double, 4, 2> K = P * H.transpose() * S.inverse();
    x += K * innovation;
    P = (Eigen::Matrix4d::Identity() - K * H) * P;
  }
  Matrix out(fut_len, 2);
  for (int k = 0; k < fut_len; ++k) {
    x = A * x;
    out(k, 0) = x(0);
    out(k, 1) = x(1);
  }
  return out;
}

Matrix two_point_baseline(const TrajectoryWindow& window, double dt, int fut_len) {
  const std::size_t n = window.history.size();
  if (n < 2) throw UsageError("two-point baseline needs at least two history frames");
  const double x = window.history[n - 1][0], y = window.history[n - 1][1];
  const double vx = (x - window.history[n - 2][0]) / dt, vy = (y - window.history[n - 2][1]) / dt;
  Matrix out(fut_len, 2);
  for (int k = 0; k < fut_len; ++k) {
    out(k, 0) = x + vx * dt * (k + 1);
    out(k, 1) = y + vy * dt * (k + 1);
  }
  return out;
}

RmseReport evaluate_baseline(const std::vector<Scene>& scenes, const KalmanOptions& options,
                             const std::string& dataset_id) {
  std::vector<Matrix> preds, truths;
  for (const auto& scene : scenes) {
    for (const auto& w : scene.windows) {
      preds.push_back(cv_baseline(w, options, static_cast<int>(w.future.size())));
      truths.push_back(future_matrix(w));
    }
  }
  RmseReport r = rmse_at_horizons(preds, truths);
  r.model = "cv_kalman";
  r.mode = "baseline";
  r.dataset_id = dataset_id;
  if (dataset_id == "ngsim") r.targets = kNgsimTargets;
  return r;
}

int worker_threads() {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("DED_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw UsageError("DED_THREADS must be a positive integer");
    n = static_cast<int>(std::min<long>(v, n));
  }
  return n;
}

RmseReport evaluate(const Model& model, const std::vector<Scene>& scenes, EvalMode mode,
                    Variant variant, std::uint64_t seed, const std::string& dataset_id, int threads) {
  if (scenes.empty()) throw UsageError("no scenes to evaluate");
  if (mode == EvalMode::best_of_C && !uses_endpoint_predictor(variant)) {
    throw UsageError("best_of_C needs a variant with the endpoint predictor");
  }
  std::vector<std::vector<HorizonErrors>> per_scene(scenes.size());
  const std::size_t workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(scenes.size())));
  if (workers == 1) {
    for (std::size_t s = 0; s < scenes.size(); ++s) per_scene[s] = score_scene(model, scenes[s], mode, variant, seed);
  } else {
    std::vector<std::exception_ptr> failures(workers);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t s = t; s < scenes.size(); s += workers) {
            per_scene[s] = score_scene(model, scenes[s], mode, variant, seed);
          }
        } catch (...) {
          failures[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  std::vector<HorizonErrors> errors;
  std::size_t agents = 0;
  for (const auto& s : per_scene) {
    errors.insert(errors.end(), s.begin(), s.end());
    agents += s.size();
  }
  RmseReport r = reduce(errors);
  r.model = to_string(variant);
  r.mode = to_string(mode);
  r.dataset_id = dataset_id;
  r.param_count = model.params().scalar_count();
  r.macs_per_scene = model.macs_per_agent(variant) * static_cast<double>(agents) /
                     static_cast<double>(scenes.size());
  if (dataset_id == "ngsim") r.targets = kNgsimTargets;
  return r;
}

RmseReport evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& dataset,
                               const std::vector<Scene>& scenes, EvalMode mode, int threads) {
  const Config cfg = checkpoint_config(ckpt);
  if (cfg.get_int("data.hist") != dataset.hist_len || cfg.get_int("data.fut") != dataset.fut_len) {
    throw DataError("checkpoint expects windows of " + cfg.get("data.hist") + "+" + cfg.get("data.fut") +
                    " frames, dataset has " + std::to_string(dataset.hist_len) + "+" +
                    std::to_string(dataset.fut_len));
  }
  if (dataset.fut_len < kHorizonFrames.back()) {
    throw DataError("dataset future is shorter than the 5 s horizon");
  }
  const auto model = restore_model(ckpt);
  const TrainConfig tc = TrainConfig::from(cfg);
  return evaluate(*model, scenes, mode, tc.variant, tc.seed, dataset.id, threads);
}

std::vector<AblationRow> run_ablation(const DatasetSplit& split, const Config& config,
                                      const std::string& dataset_id, int n_seeds,
                                      std::ostream* progress, int threads) {
  if (n_seeds < 1) throw UsageError("ablation needs at least one seed");
  if (split.test.empty()) throw UsageError("test split is empty");
  const std::uint64_t seed0 = std::stoull(config.get("train.seed"));
  std::vector<AblationRow> rows;
  for (Variant v : {Variant::full, Variant::no_ep, Variant::no_ed, Variant::none}) {
    AblationRow row;
    row.variant = v;
    for (int s = 0; s < n_seeds; ++s) {
      Config c = config;
      c.set("train.variant", to_string(v));
      c.set("train.seed", std::to_string(seed0 + static_cast<std::uint64_t>(s)));
      if (progress) *progress << "ablation: variant " << to_string(v) << " seed " << c.get("train.seed") << '\n';
      const auto trained = train(split, c, dataset_id, nullptr);
      const auto model = restore_model(trained.checkpoint);
      row.runs.push_back(evaluate(*model, split.test, EvalMode::calibrated, v,
                                  seed0 + static_cast<std::uint64_t>(s), dataset_id, threads));
    }
    for (int h = 0; h < kHorizons; ++h) {
      double acc = 0.0;
      for (const auto& r : row.runs) acc += r.rmse[static_cast<std::size_t>(h)];
      row.mean_rmse[static_cast<std::size_t>(h)] = acc / static_cast<double>(row.runs.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ded
