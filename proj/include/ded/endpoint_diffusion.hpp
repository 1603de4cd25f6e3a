#pragma once

// Conditional denoising diffusion over 2-D trajectory endpoints.
//
// Step indices run 1..K. alpha_bar(0) is defined as 1, so the posterior at
// k = 1 collapses onto Y0.

#include "ded/batch.hpp"
#include "ded/nn/layers.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace ded {

struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;       // index k-1
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product of alpha

  double beta_at(int k) const { return beta[static_cast<std::size_t>(k - 1)]; }
  double alpha_at(int k) const { return alpha[static_cast<std::size_t>(k - 1)]; }
  double alpha_bar_at(int k) const { return k == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(k - 1)]; }
  // Variance of q(Y_{k-1} | Y_k, Y_0).
  double posterior_variance(int k) const;
  void check_step(int k) const;
};

// Linearly spaced betas; requires 0 < beta_start <= beta_end < 1 and K >= 1.
NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

Vec2 forward_diffuse(Vec2 y0, int k, Vec2 eps, const NoiseSchedule& schedule);
// One forward transition Y_{k-1} -> Y_k.
Vec2 forward_step(Vec2 y_prev, int k, Vec2 eps, const NoiseSchedule& schedule);
Vec2 posterior_mean(Vec2 yk, Vec2 y0, int k, const NoiseSchedule& schedule);
// Reverse-process mean given the predicted noise at (Y_k, k).
Vec2 reparam_mean(Vec2 yk, int k, Vec2 predicted_noise, const NoiseSchedule& schedule);

struct DenoiserConfig {
  int hidden = 128;
  int time_embed = 32;
};

// Sinusoidal embedding of the step index, one row per entry of `steps`.
Matrix step_embedding(std::span<const int> steps, int width);

// Noise predictor eps_theta(Y_k, k, f): a three-layer feed-forward network on
// [Y_k, embed(k), f].
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(nn::ParamStore& store, const DenoiserConfig& config, int guidance_dim,
           std::mt19937_64& rng);

  // yk: N x 2, f: N x guidance_dim, one step index per row.
  nn::Var operator()(const nn::Var& yk, std::span<const int> steps, const nn::Var& f) const;
  int guidance_dim() const { return guidance_dim_; }

  // Inference-only predictor for a fixed guidance vector, with the guidance
  // and step-embedding contributions to the first layer cached.
  std::function<Matrix(const Matrix&, int)> bind(const Eigen::RowVectorXd& f,
                                                 const NoiseSchedule& schedule) const;

 private:
  DenoiserConfig config_;
  int guidance_dim_ = 0;
  nn::Linear layer1_;
  nn::Linear layer2_;
  nn::Linear layer3_;
};

// Differentiable noise model used by the loss: (Y_k, steps, f) -> N x 2.
using NoiseModel = std::function<nn::Var(const nn::Var&, std::span<const int>, const nn::Var&)>;
// Inference noise predictor for one agent: (Y_k: M x 2, k) -> M x 2.
using NoisePredictor = std::function<Matrix(const Matrix&, int)>;

// Mean over rows of ||eps - eps_theta(forward_diffuse(Y0, k, eps), k, f)||^2,
// with k ~ U{1..K} and eps ~ N(0, I) drawn per row (and per draw).
nn::Var diffusion_loss(const Matrix& y0, const nn::Var& f, const NoiseModel& model,
                       const NoiseSchedule& schedule, std::mt19937_64& rng, int draws = 1);

enum class DensityKind { gaussian, kde };

struct EndpointSampleSet {
  Matrix samples;  // M x 2
  Vec2 mean;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();  // regularized
  bool degenerate = false;  // raw covariance was not positive definite
  DensityKind kind = DensityKind::gaussian;
  double bandwidth = 0.0;  // KDE only
};

inline constexpr double kCovarianceJitter = 1e-6;

// Two-pass mean and unbiased covariance plus jitter; KDE bandwidth by
// Scott's rule. Requires at least two samples.
EndpointSampleSet fit_density(Matrix samples, DensityKind kind = DensityKind::gaussian);

// M independent ancestral chains; chain j draws from its own stream seeded
// by (seed, j), so the result does not depend on evaluation order.
EndpointSampleSet sample_endpoints(const NoisePredictor& predictor, int samples,
                                   const NoiseSchedule& schedule, std::uint64_t seed,
                                   DensityKind kind = DensityKind::gaussian);

double gaussian_nll(Vec2 point, Vec2 mean, const Eigen::Matrix2d& covariance);
double endpoint_nll(Vec2 point, const EndpointSampleSet& set);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace ded
