#include "ded/calibrate_decode.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace ded {

using nn::Var;

std::pair<Vec2, int> calibrate(const EndpointCandidates& candidates, const EndpointSampleSet& dist) {
  const Eigen::Index C = candidates.points.rows();
  if (C < 1) throw UsageError("calibrate needs at least one candidate");
  int best = 0;
  double best_nll = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    const double nll = endpoint_nll({candidates.points(c, 0), candidates.points(c, 1)}, dist);
    if (c == 0 || nll < best_nll) {
      best = static_cast<int>(c);
      best_nll = nll;
    }
  }
  return {{candidates.points(best, 0), candidates.points(best, 1)}, best};
}

std::vector<int> rank_candidates(const EndpointCandidates& candidates,
                                 const EndpointSampleSet& dist, int keep) {
  const int C = static_cast<int>(candidates.points.rows());
  std::vector<double> nll(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    nll[static_cast<std::size_t>(c)] = endpoint_nll({candidates.points(c, 0), candidates.points(c, 1)}, dist);
  }
  std::vector<int> order(static_cast<std::size_t>(C));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return nll[static_cast<std::size_t>(a)] < nll[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(std::clamp(keep, 0, C)));
  return order;
}

TrajectoryDecoder::TrajectoryDecoder(nn::ParamStore& store, const DecoderConfig& config,
                                     int hist_len, int fut_len, int guidance_dim,
                                     double pos_scale, std::mt19937_64& rng)
    : config_(config), hist_len_(hist_len), fut_len_(fut_len) {
  if (config.layers < 0 || config.heads < 1 || config.d_model % config.heads != 0) {
    throw UsageError("decoder: need layers >= 0 and d_model divisible by heads");
  }
  const int d = config.d_model;
  std::normal_distribution<double> normal(0.0, 0.02);
  auto small = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };
  history_embed_ = nn::Linear(store, "tp.hist_embed", kFeatureDim, d, rng);
  history_positions_ = store.add("tp.hist_positions", small(hist_len, d));
  guidance_embed_ = nn::Linear(store, "tp.gi_embed", guidance_dim, d, rng);
  endpoint_embed_ = nn::Linear(store, "tp.ep_embed", 2, d, rng);
  token_types_ = store.add("tp.token_types", small(2, d));
  for (int l = 0; l < config.layers; ++l) {
    encoder_.emplace_back(store, "tp.block" + std::to_string(l), d, config.heads, rng);
  }
  queries_ = store.add("tp.queries", small(fut_len, d));
  cross_ = nn::CrossBlock(store, "tp.cross", d, config.heads, rng);
  head_ = nn::Linear(store, "tp.head", d, 5, rng);
  // The head works in normalized units like the means; raw sigma is the
  // head output times pos_scale. Mean and correlation columns start at zero
  // so the skip path alone sets the initial trajectory.
  head_.weight.mutable_value().setZero();
  head_.bias.mutable_value().setZero();
  const double s = std::max(pos_scale, 0.1);
  const double spread = 0.25 * s;
  const double raw = spread > 30.0 ? spread : std::log(std::expm1(spread));
  head_.bias.mutable_value()(0, 2) = raw / s;
  head_.bias.mutable_value()(0, 3) = raw / s;
  // Straight line from the origin to the endpoint; the history columns
  // start at zero.
  skip_ = nn::Linear(store, "tp.skip", 2 + kFeatureDim, 2 * fut_len, rng);
  skip_.weight.mutable_value().setZero();
  for (int t = 0; t < fut_len; ++t) {
    const double frac = static_cast<double>(t + 1) / fut_len;
    skip_.weight.mutable_value()(0, 2 * t) = frac;
    skip_.weight.mutable_value()(1, 2 * t + 1) = frac;
  }
}

TrajectoryDecoder::Output TrajectoryDecoder::operator()(const Batch& batch, const Var& guidance,
                                                        const Matrix& endpoint, bool use_endpoint,
                                                        double pos_scale) const {
  if (batch.hist_len != hist_len_ || batch.fut_len != fut_len_) {
    throw UsageError("window lengths do not match the decoder");
  }
  const int B = batch.agents, T = batch.hist_len, F = batch.fut_len, d = config_.d_model;
  if (endpoint.rows() != B || endpoint.cols() != 2) throw UsageError("endpoint must be agents x 2");

  Var hist = nn::add(nn::matmul(nn::constant(batch.history_agent_major), history_embed_.weight),
                     nn::tile_rows(history_positions_, B));
  hist = nn::add_row(hist, history_embed_.bias);
  const Var gi_tok = nn::add_row(guidance_embed_(guidance), nn::slice_rows(token_types_, 0, 1));
  const Var ep_tok = use_endpoint
                         ? nn::add_row(endpoint_embed_(nn::constant(endpoint)), nn::slice_rows(token_types_, 1, 1))
                         : nn::constant(Matrix::Zero(B, d));
  const std::array<Var, 3> parts{hist, gi_tok, ep_tok};
  const Var stacked = nn::concat_rows(parts);
  const int M = T + 2;
  std::vector<Eigen::Index> order;
  order.reserve(static_cast<std::size_t>(B * M));
  for (int a = 0; a < B; ++a) {
    for (int t = 0; t < T; ++t) order.push_back(a * T + t);
    order.push_back(B * T + a);
    order.push_back(B * T + B + a);
  }
  Var memory = nn::gather_rows(stacked, order);
  std::vector<nn::Segment> mem_segments(static_cast<std::size_t>(B));
  std::vector<nn::Segment> q_segments(static_cast<std::size_t>(B));
  for (int a = 0; a < B; ++a) {
    mem_segments[static_cast<std::size_t>(a)] = {a * M, M};
    q_segments[static_cast<std::size_t>(a)] = {a * F, F};
  }
  for (const auto& block : encoder_) memory = block(memory, mem_segments);
  const Var q = cross_(nn::tile_rows(queries_, B), memory, q_segments, mem_segments);
  const Var raw = head_(q);  // (B*F) x 5

  Matrix skip_in(B, 2 + kFeatureDim);
  skip_in.leftCols(2) = use_endpoint ? endpoint : Matrix::Zero(B, 2);
  skip_in.rightCols(kFeatureDim) = batch.last_frame;
  const Var skip = nn::reshape(skip_(nn::constant(std::move(skip_in))), B * F, 2);

  Output out;
  out.mu = nn::scale(nn::add(nn::slice_cols(raw, 0, 2), skip), pos_scale);
  out.raw_sigma = nn::scale(nn::slice_cols(raw, 2, 2), pos_scale);
  out.raw_rho = nn::slice_cols(raw, 4, 1);
  return out;
}

void TrajectoryDecoder::zero_endpoint_pathway() {
  endpoint_embed_.weight.mutable_value().setZero();
  endpoint_embed_.bias.mutable_value().setZero();
  skip_.weight.mutable_value().topRows(2).setZero();
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::vector<GaussianTrajectory> to_gaussians(const TrajectoryDecoder::Output& out, int fut_len) {
  const Eigen::Index rows = out.mu.rows();
  const Eigen::Index B = rows / fut_len;
  std::vector<GaussianTrajectory> result(static_cast<std::size_t>(B));
  for (Eigen::Index a = 0; a < B; ++a) {
    auto& g = result[static_cast<std::size_t>(a)];
    g.mu = out.mu.value().middleRows(a * fut_len, fut_len);
    g.sigma = out.raw_sigma.value().middleRows(a * fut_len, fut_len).unaryExpr(
        [](double x) { return softplus(x) + kSigmaFloor; });
    g.rho = out.raw_rho.value().middleRows(a * fut_len, fut_len).col(0).unaryExpr(
        [](double x) { return kRhoLimit * std::tanh(x); });
    if (!g.mu.allFinite() || !g.sigma.allFinite() || !g.rho.allFinite()) {
      throw NumericError("trajectory decoder produced non-finite output");
    }
  }
  return result;
}

GaussianTrajectory decode_trajectory(const TrajectoryWindow& window, const Eigen::RowVectorXd& gi,
                                     Vec2 endpoint, const TrajectoryDecoder& decoder,
                                     const Normalizer& norm) {
  nn::NoGradGuard no_grad;
  if (!std::isfinite(endpoint.x) || !std::isfinite(endpoint.y) || !gi.allFinite()) {
    throw NumericError("decoder input is non-finite");
  }
  const Batch batch = make_window_batch(window, norm);
  Matrix ep(1, 2);
  ep << endpoint.x / norm.pos_scale, endpoint.y / norm.pos_scale;
  const auto out = decoder(batch, nn::constant(Matrix(gi)), ep, true, norm.pos_scale);
  return to_gaussians(out, batch.fut_len).front();
}

Var bivariate_nll(const Var& mu, const Var& raw_sigma, const Var& raw_rho, const Matrix& truth) {
  if (mu.rows() != truth.rows() || mu.cols() != 2 || truth.cols() != 2 ||
      raw_sigma.rows() != mu.rows() || raw_sigma.cols() != 2 || raw_rho.rows() != mu.rows() ||
      raw_rho.cols() != 1) {
    throw UsageError("bivariate_nll shape mismatch");
  }
  const Var sigma = nn::add_scalar(nn::softplus(raw_sigma), kSigmaFloor);
  const Var rho = nn::scale(nn::tanh(raw_rho), kRhoLimit);
  const Var z = nn::div(nn::sub(nn::constant(truth), mu), sigma);
  const Var zx = nn::slice_cols(z, 0, 1);
  const Var zy = nn::slice_cols(z, 1, 1);
  const Var one_minus = nn::add_scalar(nn::scale(nn::square(rho), -1.0), 1.0);
  const Var quad = nn::sub(nn::add(nn::square(zx), nn::square(zy)),
                           nn::scale(nn::mul(rho, nn::mul(zx, zy)), 2.0));
  const Var log_sigma = nn::row_sum(nn::log(sigma));
  const Var per_row = nn::add(nn::add(log_sigma, nn::scale(nn::log(one_minus), 0.5)),
                              nn::scale(nn::div(quad, one_minus), 0.5));
  return nn::add_scalar(nn::mean(per_row), std::log(2.0 * std::numbers::pi));
}

double bivariate_density(Vec2 point, Vec2 mu, Vec2 sigma, double rho) {
  const double zx = (point.x - mu.x) / sigma.x;
  const double zy = (point.y - mu.y) / sigma.y;
  const double om = 1.0 - rho * rho;
  const double q = (zx * zx + zy * zy - 2.0 * rho * zx * zy) / om;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * sigma.x * sigma.y * std::sqrt(om));
}

double trajectory_nll_loss(const GaussianTrajectory& pred, const Matrix& truth) {
  const Eigen::Index F = pred.mu.rows();
  if (truth.rows() != F || truth.cols() != 2) throw UsageError("trajectory length mismatch");
  double acc = 0.0;
  for (Eigen::Index t = 0; t < F; ++t) {
    const double sx = pred.sigma(t, 0), sy = pred.sigma(t, 1), r = pred.rho(t);
    const double zx = (truth(t, 0) - pred.mu(t, 0)) / sx;
    const double zy = (truth(t, 1) - pred.mu(t, 1)) / sy;
    const double om = 1.0 - r * r;
    acc += std::log(2.0 * std::numbers::pi) + std::log(sx) + std::log(sy) + 0.5 * std::log(om) +
           0.5 * (zx * zx + zy * zy - 2.0 * r * zx * zy) / om;
  }
  return acc / static_cast<double>(F);
}

std::vector<Matrix> sample_trajectories(const GaussianTrajectory& pred, int n, std::uint64_t seed) {
  if (n < 0) throw UsageError("sample count must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index F = pred.mu.rows();
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Matrix s(F, 2);
    for (Eigen::Index t = 0; t < F; ++t) {
      const double sx = pred.sigma(t, 0), sy = pred.sigma(t, 1), r = pred.rho(t);
      const double z1 = normal(rng), z2 = normal(rng);
      s(t, 0) = pred.mu(t, 0) + sx * z1;
      s(t, 1) = pred.mu(t, 1) + sy * (r * z1 + std::sqrt(1.0 - r * r) * z2);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ded
