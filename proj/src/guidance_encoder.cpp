#include "ded/guidance_encoder.hpp"

#include "ded/errors.hpp"

namespace ded {

using nn::Var;

GuidanceEncoder::GuidanceEncoder(nn::ParamStore& store, const EncoderConfig& config,
                                 std::mt19937_64& rng)
    : config_(config) {
  if (config.hidden_t < 1 || config.hidden_s < 1) throw UsageError("encoder widths must be >= 1");
  lstm_ = nn::Lstm(store, "encoder.lstm", kFeatureDim, config.hidden_t, rng);
  aggregate_ = nn::Linear(store, "encoder.agg", 2 * config.hidden_t + 2, config.hidden_s, rng);
}

Var GuidanceEncoder::temporal(const Batch& batch) const {
  return lstm_(nn::constant(batch.history_time_major), batch.hist_len, batch.agents,
               batch.mask_time_major);
}

Var GuidanceEncoder::spatial(const Batch& batch, const Var& temporal) const {
  const Var pooled = nn::neighbor_mean(temporal, batch.neighbors);
  const std::array<Var, 3> parts{temporal, pooled, nn::constant(batch.neighbor_offset)};
  return nn::tanh(aggregate_(nn::concat_cols(parts)));
}

Var GuidanceEncoder::guidance(const Batch& batch) const {
  const Var temp = temporal(batch);
  const std::array<Var, 2> parts{temp, spatial(batch, temp)};
  return nn::concat_cols(parts);
}

Eigen::VectorXd encode_temporal(const TrajectoryWindow& window, const GuidanceEncoder& encoder,
                                const Normalizer& norm) {
  nn::NoGradGuard no_grad;
  const Batch batch = make_window_batch(window, norm);
  return encoder.temporal(batch).value().row(0).transpose();
}

std::vector<GuidanceFeature> encode_scene(const Scene& scene, const GuidanceEncoder& encoder,
                                          const Normalizer& norm) {
  nn::NoGradGuard no_grad;
  const Batch batch = make_batch(scene, norm);
  const Var temp = encoder.temporal(batch);
  const Var spat = encoder.spatial(batch, temp);
  std::vector<GuidanceFeature> out(static_cast<std::size_t>(batch.agents));
  for (int a = 0; a < batch.agents; ++a) {
    auto& g = out[static_cast<std::size_t>(a)];
    g.temp = temp.value().row(a).transpose();
    g.spat = spat.value().row(a).transpose();
    g.gi.resize(g.temp.size() + g.spat.size());
    g.gi << g.temp, g.spat;
  }
  return out;
}

}  // namespace ded
