#include "ded/model.hpp"

#include "ded/errors.hpp"

#include <algorithm>

namespace ded {

using nn::Var;

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_ed") return Variant::no_ed;
  if (s == "no_ep") return Variant::no_ep;
  if (s == "none") return Variant::none;
  throw UsageError("unknown variant '" + s + "' (expected full, no_ed, no_ep or none)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_ed: return "no_ed";
    case Variant::no_ep: return "no_ep";
    case Variant::none: return "none";
  }
  return "unknown";
}

bool uses_diffusion(Variant v) { return v == Variant::full || v == Variant::no_ep; }
bool uses_endpoint_predictor(Variant v) { return v == Variant::full || v == Variant::no_ed; }

ModelConfig ModelConfig::from(const Config& c) {
  ModelConfig m;
  m.hist_len = c.get_int("data.hist");
  m.fut_len = c.get_int("data.fut");
  m.encoder.hidden_t = c.get_int("encoder.hidden_t");
  m.encoder.hidden_s = c.get_int("encoder.hidden_s");
  m.denoiser.hidden = c.get_int("diffusion.hidden");
  m.denoiser.time_embed = c.get_int("diffusion.time_embed");
  m.diffusion_steps = c.get_int("diffusion.K");
  m.beta_start = c.get_double("diffusion.beta_start");
  m.beta_end = c.get_double("diffusion.beta_end");
  m.samples = c.get_int("diffusion.samples");
  m.loss_draws = c.get_int("diffusion.loss_draws");
  m.density = c.get("diffusion.density") == "kde" ? DensityKind::kde : DensityKind::gaussian;
  m.ep.layers = c.get_int("ep.layers");
  m.ep.heads = c.get_int("ep.heads");
  m.ep.d_model = c.get_int("ep.d_model");
  m.ep.candidates = c.get_int("ep.candidates");
  m.tp.layers = c.get_int("tp.layers");
  m.tp.heads = c.get_int("tp.heads");
  m.tp.d_model = c.get_int("tp.d_model");
  m.report_modes = c.get_int("tp.report_modes");
  if (m.samples < 2) throw UsageError("diffusion.samples must be >= 2");
  if (m.loss_draws < 1) throw UsageError("diffusion.loss_draws must be >= 1");
  if (m.hist_len < 2 || m.fut_len < 1) throw UsageError("data.hist >= 2 and data.fut >= 1 required");
  return m;
}

Model::Model(const ModelConfig& config, const Normalizer& norm, std::uint64_t seed)
    : config_(config), norm_(norm) {
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  schedule_ = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end);
  encoder_ = GuidanceEncoder(params_, config.encoder, rng);
  denoiser_ = Denoiser(params_, config.denoiser, encoder_.guidance_dim(), rng);
  ep_ = EndpointTransformer(params_, config.ep, config.hist_len, rng);
  decoder_ = TrajectoryDecoder(params_, config.tp, config.hist_len, config.fut_len,
                               encoder_.guidance_dim(), norm.pos_scale, rng);
}

std::uint64_t agent_stream(std::uint64_t seed, const TrajectoryWindow& window) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(window.agent_id)),
                  static_cast<std::uint64_t>(window.end_frame));
}

Model::Losses Model::losses(const Batch& batch, const LossWeights& weights, Variant variant,
                            std::mt19937_64& rng) const {
  Losses out;
  const Var gi = encoder_.guidance(batch);
  if (uses_diffusion(variant)) {
    out.diffusion = diffusion_loss(batch.ed_target, gi, denoiser_, schedule_, rng, config_.loss_draws);
  }
  if (uses_endpoint_predictor(variant)) {
    const auto ep = ep_(batch);
    out.endpoint = endpoint_loss(ep.endpoints, ep.logits, batch.ed_target);
  }
  const auto dec = decoder_(batch, gi, batch.endpoint, variant != Variant::none, norm_.pos_scale);
  out.trajectory = bivariate_nll(dec.mu, dec.raw_sigma, dec.raw_rho, batch.future);

  out.total = nn::scale(out.trajectory, weights.trajectory);
  if (out.diffusion) out.total = nn::add(out.total, nn::scale(out.diffusion, weights.diffusion));
  if (out.endpoint) out.total = nn::add(out.total, nn::scale(out.endpoint, weights.endpoint));
  return out;
}

std::vector<AgentPrediction> Model::predict(const Scene& scene, Variant variant, std::uint64_t seed,
                                            bool all_candidates) const {
  nn::NoGradGuard no_grad;
  const Batch batch = make_batch(scene, norm_);
  const int B = batch.agents;
  const Var gi = encoder_.guidance(batch);
  std::vector<AgentPrediction> preds(static_cast<std::size_t>(B));
  for (int a = 0; a < B; ++a) preds[static_cast<std::size_t>(a)].agent_id = batch.windows[static_cast<std::size_t>(a)]->agent_id;

  if (uses_diffusion(variant)) {
    for (int a = 0; a < B; ++a) {
      const auto predictor = denoiser_.bind(gi.value().row(a), schedule_);
      auto set = sample_endpoints(predictor, config_.samples, schedule_,
                                  agent_stream(seed, *batch.windows[static_cast<std::size_t>(a)]));
      const Matrix metric = (set.samples * norm_.ed_scale).rowwise() + batch.ed_anchor.row(a);
      preds[static_cast<std::size_t>(a)].distribution = fit_density(metric, config_.density);
    }
  }
  if (uses_endpoint_predictor(variant) || all_candidates) {
    auto cands = to_candidates(ep_(batch), batch, norm_);
    for (int a = 0; a < B; ++a) preds[static_cast<std::size_t>(a)].candidates = std::move(cands[static_cast<std::size_t>(a)]);
  }

  Matrix endpoints = Matrix::Zero(B, 2);
  for (int a = 0; a < B; ++a) {
    auto& p = preds[static_cast<std::size_t>(a)];
    switch (variant) {
      case Variant::full: {
        const auto [ep, idx] = calibrate(*p.candidates, *p.distribution);
        p.endpoint = ep;
        p.chosen_candidate = idx;
        p.ranked_modes = rank_candidates(*p.candidates, *p.distribution, config_.report_modes);
        break;
      }
      case Variant::no_ep:
        p.endpoint = p.distribution->mean;
        break;
      case Variant::no_ed: {
        Eigen::Index idx = 0;
        p.candidates->logits.maxCoeff(&idx);
        p.chosen_candidate = static_cast<int>(idx);
        p.endpoint = Vec2{p.candidates->points(idx, 0), p.candidates->points(idx, 1)};
        break;
      }
      case Variant::none:
        break;
    }
    if (p.endpoint) {
      endpoints(a, 0) = p.endpoint->x / norm_.pos_scale;
      endpoints(a, 1) = p.endpoint->y / norm_.pos_scale;
    }
  }
  const auto dec = decoder_(batch, gi, endpoints, variant != Variant::none, norm_.pos_scale);
  auto trajs = to_gaussians(dec, batch.fut_len);
  for (int a = 0; a < B; ++a) preds[static_cast<std::size_t>(a)].trajectory = std::move(trajs[static_cast<std::size_t>(a)]);
  return preds;
}

std::vector<std::vector<Matrix>> Model::decode_all_candidates(const Scene& scene) const {
  nn::NoGradGuard no_grad;
  const Batch batch = make_batch(scene, norm_);
  const int B = batch.agents;
  const int C = ep_.candidates();
  const Var gi = encoder_.guidance(batch);
  const auto ep = ep_(batch);
  std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(B));
  for (int c = 0; c < C; ++c) {
    Matrix endpoints(B, 2);
    for (int a = 0; a < B; ++a) {
      endpoints(a, 0) = ep.endpoints.value()(a, 2 * c);
      endpoints(a, 1) = ep.endpoints.value()(a, 2 * c + 1);
    }
    const auto dec = decoder_(batch, gi, endpoints, true, norm_.pos_scale);
    for (int a = 0; a < B; ++a) {
      out[static_cast<std::size_t>(a)].push_back(dec.mu.value().middleRows(a * batch.fut_len, batch.fut_len));
    }
  }
  return out;
}

double Model::macs_per_agent(Variant variant) const {
  const double T = config_.hist_len, F = config_.fut_len;
  const double ht = config_.encoder.hidden_t, hs = config_.encoder.hidden_s;
  const double g = ht + hs;
  double macs = T * (kFeatureDim * 4 * ht + ht * 4 * ht) + (2 * ht + 2) * hs;

  auto block = [](double rows, double kv_rows, double d) {
    return rows * 2 * d * d + kv_rows * 2 * d * d + 2 * rows * kv_rows * d + rows * 4 * d * d;
  };
  if (uses_diffusion(variant)) {
    const double h = config_.denoiser.hidden;
    macs += (g + config_.denoiser.time_embed) * h +
            config_.samples * config_.diffusion_steps * (2 * h + h * h + 2 * h);
  }
  if (uses_endpoint_predictor(variant)) {
    const double d = config_.ep.d_model, C = config_.ep.candidates;
    macs += T * kFeatureDim * d + config_.ep.layers * block(T, T, d) + d * 3 * C + d * 2 + kFeatureDim * 2;
    macs += C;  // calibration
  }
  const double d = config_.tp.d_model;
  const double M = T + 2;
  macs += T * kFeatureDim * d + g * d + 2 * d + config_.tp.layers * block(M, M, d) + block(F, M, d) +
          F * d * 5 + (2 + kFeatureDim) * 2 * F;
  return macs;
}

}  // namespace ded
