#include "ded/endpoint_diffusion.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ded {

using nn::Var;

double NoiseSchedule::posterior_variance(int k) const {
  check_step(k);
  return (1.0 - alpha_bar_at(k - 1)) / (1.0 - alpha_bar_at(k)) * (1.0 - alpha_at(k));
}

void NoiseSchedule::check_step(int k) const {
  if (k < 1 || k > steps) {
    throw UsageError("diffusion step " + std::to_string(k) + " outside [1, " +
                     std::to_string(steps) + "]");
  }
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw UsageError("diffusion.K must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw UsageError("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double b = steps == 1 ? beta_start
                                : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                                   static_cast<double>(steps - 1);
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  return s;
}

Vec2 forward_diffuse(Vec2 y0, int k, Vec2 eps, const NoiseSchedule& schedule) {
  schedule.check_step(k);
  const double ab = schedule.alpha_bar_at(k);
  return std::sqrt(ab) * y0 + std::sqrt(1.0 - ab) * eps;
}

Vec2 forward_step(Vec2 y_prev, int k, Vec2 eps, const NoiseSchedule& schedule) {
  schedule.check_step(k);
  const double a = schedule.alpha_at(k);
  return std::sqrt(a) * y_prev + std::sqrt(1.0 - a) * eps;
}

Vec2 posterior_mean(Vec2 yk, Vec2 y0, int k, const NoiseSchedule& schedule) {
  schedule.check_step(k);
  const double a = schedule.alpha_at(k);
  const double ab = schedule.alpha_bar_at(k);
  const double ab_prev = schedule.alpha_bar_at(k - 1);
  const double c0 = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  const double ck = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  return c0 * y0 + ck * yk;
}

Vec2 reparam_mean(Vec2 yk, int k, Vec2 predicted_noise, const NoiseSchedule& schedule) {
  schedule.check_step(k);
  if (!std::isfinite(predicted_noise.x) || !std::isfinite(predicted_noise.y)) {
    throw NumericError("denoiser produced a non-finite noise estimate");
  }
  const double a = schedule.alpha_at(k);
  const double ab = schedule.alpha_bar_at(k);
  const double c = (1.0 - a) / std::sqrt(1.0 - ab);
  return (1.0 / std::sqrt(a)) * (yk - c * predicted_noise);
}

Matrix step_embedding(std::span<const int> steps, int width) {
  Matrix out(static_cast<Eigen::Index>(steps.size()), width);
  const int half = width / 2;
  for (std::size_t r = 0; r < steps.size(); ++r) {
    for (int i = 0; i < half; ++i) {
      const double freq =
          std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max(half, 1)));
      const double arg = static_cast<double>(steps[r]) * freq;
      out(static_cast<Eigen::Index>(r), i) = std::sin(arg);
      out(static_cast<Eigen::Index>(r), half + i) = std::cos(arg);
    }
    if (width % 2 == 1) out(static_cast<Eigen::Index>(r), width - 1) = 0.0;
  }
  return out;
}

Denoiser::Denoiser(nn::ParamStore& store, const DenoiserConfig& config, int guidance_dim,
                   std::mt19937_64& rng)
    : config_(config), guidance_dim_(guidance_dim) {
  if (config.hidden < 1 || config.time_embed < 2) throw UsageError("bad denoiser widths");
  layer1_ = nn::Linear(store, "diffusion.l1", 2 + config.time_embed + guidance_dim, config.hidden, rng);
  layer2_ = nn::Linear(store, "diffusion.l2", config.hidden, config.hidden, rng);
  layer3_ = nn::Linear(store, "diffusion.l3", config.hidden, 2, rng);
}

Var Denoiser::operator()(const Var& yk, std::span<const int> steps, const Var& f) const {
  const std::array<Var, 3> parts{yk, nn::constant(step_embedding(steps, config_.time_embed)), f};
  Var h = nn::silu(layer1_(nn::concat_cols(parts)));
  h = nn::silu(layer2_(h));
  return layer3_(h);
}

std::function<Matrix(const Matrix&, int)> Denoiser::bind(const Eigen::RowVectorXd& f,
                                                         const NoiseSchedule& schedule) const {
  const Matrix& w1 = layer1_.weight.value();
  const Eigen::Index te = config_.time_embed;
  if (f.size() != guidance_dim_) throw UsageError("guidance width does not match denoiser");
  Eigen::RowVectorXd fixed = layer1_.bias.value().row(0) + f * w1.bottomRows(guidance_dim_);
  std::vector<int> ks(static_cast<std::size_t>(schedule.steps));
  for (int k = 1; k <= schedule.steps; ++k) ks[static_cast<std::size_t>(k - 1)] = k;
  Matrix step_part = step_embedding(ks, config_.time_embed) * w1.middleRows(2, te);
  step_part.rowwise() += fixed;
  Matrix w_y = w1.topRows(2);
  Matrix w2 = layer2_.weight.value();
  Eigen::RowVectorXd b2 = layer2_.bias.value().row(0);
  Matrix w3 = layer3_.weight.value();
  Eigen::RowVectorXd b3 = layer3_.bias.value().row(0);
  auto silu = [](double x) { return x / (1.0 + std::exp(-x)); };
  return [=](const Matrix& y, int k) -> Matrix {
    Matrix h = y * w_y;
    h.rowwise() += step_part.row(k - 1);
    h = h.unaryExpr(silu);
    Matrix h2 = h * w2;
    h2.rowwise() += b2;
    h2 = h2.unaryExpr(silu);
    Matrix out = h2 * w3;
    out.rowwise() += b3;
    return out;
  };
}

Var diffusion_loss(const Matrix& y0, const Var& f, const NoiseModel& model,
                   const NoiseSchedule& schedule, std::mt19937_64& rng, int draws) {
  if (y0.cols() != 2) throw UsageError("diffusion targets must be N x 2");
  if (draws < 1) throw UsageError("diffusion loss needs at least one draw");
  const Eigen::Index n = y0.rows();
  std::uniform_int_distribution<int> pick(1, schedule.steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  Var total;
  for (int d = 0; d < draws; ++d) {
    std::vector<int> ks(static_cast<std::size_t>(n));
    Matrix eps(n, 2), yk(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = pick(rng);
      ks[static_cast<std::size_t>(i)] = k;
      eps(i, 0) = normal(rng);
      eps(i, 1) = normal(rng);
      const double ab = schedule.alpha_bar_at(k);
      yk.row(i) = std::sqrt(ab) * y0.row(i) + std::sqrt(1.0 - ab) * eps.row(i);
    }
    const Var residual = nn::sub(nn::constant(eps), model(nn::constant(yk), ks, f));
    const Var loss = nn::scale(nn::sum(nn::square(residual)), 1.0 / static_cast<double>(n * draws));
    total = d == 0 ? loss : nn::add(total, loss);
  }
  return total;
}

EndpointSampleSet fit_density(Matrix samples, DensityKind kind) {
  const Eigen::Index m = samples.rows();
  if (m < 2 || samples.cols() != 2) throw UsageError("density fit needs at least 2 samples of 2-D points");
  EndpointSampleSet set;
  set.kind = kind;
  double mx = 0.0, my = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    mx += samples(i, 0);
    my += samples(i, 1);
  }
  mx /= static_cast<double>(m);
  my /= static_cast<double>(m);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double dx = samples(i, 0) - mx;
    const double dy = samples(i, 1) - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double denom = static_cast<double>(m - 1);
  Eigen::Matrix2d raw;
  raw << sxx / denom, sxy / denom, sxy / denom, syy / denom;
  const double det = raw.determinant();
  set.degenerate = !(raw(0, 0) > 0.0 && det > 1e-12 * std::max(raw.trace() * raw.trace(), 1e-300));
  set.mean = {mx, my};
  set.covariance = raw + kCovarianceJitter * Eigen::Matrix2d::Identity();
  if (kind == DensityKind::kde) {
    const double spread = std::sqrt(0.5 * raw.trace());
    set.bandwidth = std::max(spread * std::pow(static_cast<double>(m), -1.0 / 6.0), 1e-3);
  }
  set.samples = std::move(samples);
  return set;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(a) ^ (b + 0x632be59bd9b4e019ull));
}

EndpointSampleSet sample_endpoints(const NoisePredictor& predictor, int samples,
                                   const NoiseSchedule& schedule, std::uint64_t seed,
                                   DensityKind kind) {
  if (samples < 2) throw UsageError("diffusion.samples must be >= 2");
  const int K = schedule.steps;
  // noise[c] holds chain c's draws: row 0 is Y_K, row K - k + 1 is z at step k.
  Matrix y(samples, 2);
  std::vector<Matrix> z(static_cast<std::size_t>(K + 1), Matrix(samples, 2));
  for (int c = 0; c < samples; ++c) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> normal(0.0, 1.0);
    y(c, 0) = normal(rng);
    y(c, 1) = normal(rng);
    for (int k = K; k >= 2; --k) {
      z[static_cast<std::size_t>(k)](c, 0) = normal(rng);
      z[static_cast<std::size_t>(k)](c, 1) = normal(rng);
    }
  }
  for (int k = K; k >= 1; --k) {
    const Matrix eps = predictor(y, k);
    if (!eps.allFinite()) throw NumericError("denoiser produced a non-finite noise estimate");
    const double a = schedule.alpha_at(k);
    const double c = (1.0 - a) / std::sqrt(1.0 - schedule.alpha_bar_at(k));
    y = (y - c * eps) / std::sqrt(a);
    if (k > 1) y += std::sqrt(schedule.posterior_variance(k)) * z[static_cast<std::size_t>(k)];
  }
  return fit_density(std::move(y), kind);
}

double gaussian_nll(Vec2 point, Vec2 mean, const Eigen::Matrix2d& covariance) {
  const Eigen::Vector2d d(point.x - mean.x, point.y - mean.y);
  const Eigen::LLT<Eigen::Matrix2d> llt(covariance);
  if (llt.info() != Eigen::Success) throw NumericError("covariance is not positive definite");
  const Eigen::Vector2d w = llt.matrixL().solve(d);
  const Eigen::Matrix2d l = llt.matrixL();
  const double log_det = 2.0 * (std::log(l(0, 0)) + std::log(l(1, 1)));
  return 0.5 * w.squaredNorm() + 0.5 * log_det + std::log(2.0 * std::numbers::pi);
}

double endpoint_nll(Vec2 point, const EndpointSampleSet& set) {
  if (set.kind == DensityKind::gaussian) return gaussian_nll(point, set.mean, set.covariance);
  const double h2 = set.bandwidth * set.bandwidth;
  const Eigen::Index m = set.samples.rows();
  std::vector<double> logs(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const double dx = point.x - set.samples(i, 0);
    const double dy = point.y - set.samples(i, 1);
    logs[static_cast<std::size_t>(i)] = -0.5 * (dx * dx + dy * dy) / h2;
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double acc = 0.0;
  for (double l : logs) acc += std::exp(l - top);
  const double log_density =
      top + std::log(acc / static_cast<double>(m)) - std::log(2.0 * std::numbers::pi * h2);
  return -log_density;
}

}  // namespace ded
