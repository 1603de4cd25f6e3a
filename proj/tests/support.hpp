#pragma once

// Shared helpers for the test suites: finite-difference gradient checks and
// small hand-built scenes.

#include "ded/batch.hpp"
#include "ded/nn/autograd.hpp"
#include "ded/types.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace ded::test {

using nn::Matrix;
using nn::Var;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Norm-wise relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
// between backprop gradients and central differences, worst over all leaves.
inline double gradient_error(const std::function<Var()>& loss, std::vector<Var> leaves,
                             double h = 1e-6, double floor = 1e-8) {
  for (auto& l : leaves) l.mutable_grad().resize(0, 0);
  nn::backward(loss());
  double worst = 0.0;
  for (auto& l : leaves) {
    Matrix analytic = l.grad().size() ? l.grad() : Matrix::Zero(l.rows(), l.cols());
    Matrix numeric(l.rows(), l.cols());
    Matrix& v = l.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double keep = v.data()[i];
      v.data()[i] = keep + h;
      const double up = loss().scalar();
      v.data()[i] = keep - h;
      const double down = loss().scalar();
      v.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double denom = std::max({analytic.norm(), numeric.norm(), floor});
    worst = std::max(worst, (analytic - numeric).norm() / denom);
  }
  return worst;
}

// Same comparison over all leaves stacked into one vector. Suited to layers
// where some parameters have an identically zero gradient (an attention key
// bias shifts every logit of a row equally), which per-leaf ratios turn into
// noise over noise.
inline double stacked_gradient_error(const std::function<Var()>& loss, std::vector<Var> leaves,
                                     double h = 1e-6) {
  for (auto& l : leaves) l.mutable_grad().resize(0, 0);
  nn::backward(loss());
  double diff = 0.0, a_sq = 0.0, n_sq = 0.0;
  for (auto& l : leaves) {
    Matrix analytic = l.grad().size() ? l.grad() : Matrix::Zero(l.rows(), l.cols());
    Matrix& v = l.mutable_value();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double keep = v.data()[i];
      v.data()[i] = keep + h;
      const double up = loss().scalar();
      v.data()[i] = keep - h;
      const double down = loss().scalar();
      v.data()[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      diff += (analytic.data()[i] - numeric) * (analytic.data()[i] - numeric);
      a_sq += analytic.data()[i] * analytic.data()[i];
      n_sq += numeric * numeric;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-300});
}

// Constant-velocity window ending at `origin`, heading with velocity v.
inline TrajectoryWindow cv_window(std::int64_t id, Vec2 origin, Vec2 v, std::int64_t end_frame = 28,
                                  int hist = kHistLen, int fut = kFutLen) {
  TrajectoryWindow w;
  w.agent_id = id;
  w.end_frame = end_frame;
  w.end_time = static_cast<double>(end_frame) * kSourceDt;
  w.origin = origin;
  for (int t = 0; t < hist; ++t) {
    const double s = -(hist - 1 - t) * kDt;
    w.history.push_back({s * v.x, s * v.y, v.x, v.y, 0.0, 0.0});
  }
  for (int k = 1; k <= fut; ++k) w.future.push_back(Vec2{k * kDt * v.x, k * kDt * v.y});
  return w;
}

inline Scene make_scene(std::vector<TrajectoryWindow> windows) {
  Scene s;
  s.scene_origin = windows.front().origin;
  for (auto& w : windows) {
    s.presence.emplace_back(w.history.size(), true);
    s.windows.push_back(std::move(w));
  }
  return s;
}

inline std::vector<Scene> random_cv_scenes(int n, std::uint64_t seed, int max_agents = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Scene> scenes;
  std::int64_t id = 0;
  for (int s = 0; s < n; ++s) {
    std::vector<TrajectoryWindow> ws;
    const int agents = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_agents));
    for (int a = 0; a < agents; ++a) {
      ws.push_back(cv_window(id++, Vec2{20 * u(rng), 20 * u(rng)}, Vec2{10 * u(rng), 10 * u(rng)}));
    }
    scenes.push_back(make_scene(std::move(ws)));
  }
  return scenes;
}

}  // namespace ded::test
