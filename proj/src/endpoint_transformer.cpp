#include "ded/endpoint_transformer.hpp"

#include "ded/endpoint_diffusion.hpp"
#include "ded/errors.hpp"

#include <cmath>

namespace ded {

using nn::Var;

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || k.rows() == 0) {
    throw UsageError("attention: Q is n x d_k, K is m x d_k, V is m x d_v with m >= 1");
  }
  nn::NoGradGuard no_grad;
  const nn::Segment qs{0, q.rows()};
  const nn::Segment ks{0, k.rows()};
  return nn::segmented_attention(nn::constant(q), nn::constant(k), nn::constant(v),
                                 std::span<const nn::Segment>(&qs, 1),
                                 std::span<const nn::Segment>(&ks, 1), 1)
      .value();
}

EndpointTransformer::EndpointTransformer(nn::ParamStore& store,
                                         const EndpointTransformerConfig& config, int hist_len,
                                         std::mt19937_64& rng)
    : config_(config), hist_len_(hist_len) {
  if (config.layers < 0 || config.candidates < 1 || config.heads < 1 ||
      config.d_model % config.heads != 0) {
    throw UsageError("endpoint transformer: need layers >= 0, candidates >= 1, d_model % heads == 0");
  }
  embed_ = nn::Linear(store, "ep.embed", kFeatureDim, config.d_model, rng);
  std::normal_distribution<double> normal(0.0, 0.02);
  Matrix pos(hist_len, config.d_model);
  for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = normal(rng);
  positions_ = store.add("ep.positions", std::move(pos));
  for (int l = 0; l < config.layers; ++l) {
    blocks_.emplace_back(store, "ep.block" + std::to_string(l), config.d_model, config.heads, rng);
  }
  // Candidate c = shared prediction + anchor_c + kHeadScale * residual_c.
  // The shared part (pooled features and last frame) is trained by every
  // winner; the down-scaled residual heads only learn where the modes
  // deviate from it, so one early winner cannot run away with the whole
  // prediction. Residual weights start at zero and anchors are fixed.
  head_ = nn::Linear(store, "ep.head", config.d_model, 3 * config.candidates, rng);
  head_.weight.mutable_value().setZero();
  head_.bias.mutable_value().setZero();
  Matrix anchors(1, 2 * config.candidates);
  std::mt19937_64 anchor_rng(mix_seed(0xa4c0, static_cast<std::uint64_t>(config.candidates)));
  std::normal_distribution<double> anchor(0.0, kAnchorSpread);
  for (int c = 0; c < 2 * config.candidates; ++c) anchors(0, c) = anchor(anchor_rng);
  anchors_ = anchors;
  shared_ = nn::Linear(store, "ep.shared", config.d_model, 2, rng);
  shared_.weight.mutable_value().setZero();
  shared_.bias.mutable_value().setZero();
  skip_ = nn::Linear(store, "ep.skip", kFeatureDim, 2, rng);
  skip_.weight.mutable_value().setZero();
  skip_.bias.mutable_value().setZero();
}

EndpointTransformer::Output EndpointTransformer::operator()(const Batch& batch) const {
  if (batch.hist_len != hist_len_) throw UsageError("history length does not match the model");
  const int B = batch.agents, T = batch.hist_len, C = config_.candidates;
  Var x = nn::add(nn::matmul(nn::constant(batch.history_agent_major), embed_.weight),
                  nn::tile_rows(positions_, B));
  x = nn::add_row(x, embed_.bias);
  std::vector<nn::Segment> segments(static_cast<std::size_t>(B));
  for (int a = 0; a < B; ++a) segments[static_cast<std::size_t>(a)] = {a * T, T};
  for (const auto& block : blocks_) x = block(x, segments);
  const Var pooled = nn::block_mean_rows(x, T);
  const Var raw = head_(pooled);  // B x 3C: C endpoints (2 each), then C logits
  Output out;
  const Var shared = nn::tile_cols(nn::add(shared_(pooled), skip_(nn::constant(batch.last_frame))), C);
  const Var residual = nn::add_row(nn::scale(nn::slice_cols(raw, 0, 2 * C), kHeadScale), nn::constant(anchors_));
  out.endpoints = nn::add(residual, shared);
  out.logits = nn::slice_cols(raw, 2 * C, C);
  return out;
}

std::vector<EndpointCandidates> to_candidates(const EndpointTransformer::Output& out,
                                              const Batch& batch, const Normalizer& norm) {
  const Eigen::Index B = out.logits.rows();
  const Eigen::Index C = out.logits.cols();
  std::vector<EndpointCandidates> result(static_cast<std::size_t>(B));
  for (Eigen::Index a = 0; a < B; ++a) {
    auto& c = result[static_cast<std::size_t>(a)];
    c.points.resize(C, 2);
    c.logits = out.logits.value().row(a).transpose();
    for (Eigen::Index i = 0; i < C; ++i) {
      c.points(i, 0) = batch.ed_anchor(a, 0) + out.endpoints.value()(a, 2 * i) * norm.ed_scale;
      c.points(i, 1) = batch.ed_anchor(a, 1) + out.endpoints.value()(a, 2 * i + 1) * norm.ed_scale;
    }
    if (!c.points.allFinite() || !c.logits.allFinite()) {
      throw NumericError("endpoint transformer produced non-finite output");
    }
  }
  return result;
}

EndpointCandidates predict_endpoints(const TrajectoryWindow& window,
                                     const EndpointTransformer& model, const Normalizer& norm) {
  nn::NoGradGuard no_grad;
  const Batch batch = make_window_batch(window, norm);
  return to_candidates(model(batch), batch, norm).front();
}

Var endpoint_loss(const Var& endpoints, const Var& logits, const Matrix& truth) {
  const Eigen::Index B = logits.rows();
  const Eigen::Index C = logits.cols();
  if (endpoints.rows() != B || endpoints.cols() != 2 * C || truth.rows() != B || truth.cols() != 2) {
    throw UsageError("endpoint_loss shape mismatch");
  }
  // Winner per agent, lowest index on ties.
  std::vector<Eigen::Index> winner_rows;
  Matrix labels = Matrix::Zero(B, C);
  for (Eigen::Index a = 0; a < B; ++a) {
    Eigen::Index best = 0;
    double best_d = 0.0;
    for (Eigen::Index c = 0; c < C; ++c) {
      const double dx = endpoints.value()(a, 2 * c) - truth(a, 0);
      const double dy = endpoints.value()(a, 2 * c + 1) - truth(a, 1);
      const double d = dx * dx + dy * dy;
      if (c == 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    labels(a, best) = 1.0;
    winner_rows.push_back(a * C + best);
  }
  // Reshape endpoints to (B*C) x 2 and gather the winning rows.
  const Var flat = nn::reshape(endpoints, B * C, 2);
  const Var chosen = nn::gather_rows(flat, winner_rows);
  const Var distance = nn::sum(nn::square(nn::sub(chosen, nn::constant(truth))));
  // BCE: -[y log s(l) + (1 - y) log s(-l)]
  const Var pos = nn::mul(nn::constant(labels), nn::log_sigmoid(logits));
  const Var neg = nn::mul(nn::constant(Matrix::Ones(B, C) - labels), nn::log_sigmoid(nn::scale(logits, -1.0)));
  const Var bce = nn::scale(nn::sum(nn::add(pos, neg)), -1.0);
  return nn::scale(nn::add(distance, bce), 1.0 / static_cast<double>(B));
}

}  // namespace ded
