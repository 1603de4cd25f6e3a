#pragma once

#include "ded/batch.hpp"
#include "ded/nn/layers.hpp"

#include <vector>

namespace ded {

struct EncoderConfig {
  int hidden_t = 64;
  int hidden_s = 64;
};

struct GuidanceFeature {
  Eigen::VectorXd temp;
  Eigen::VectorXd spat;
  Eigen::VectorXd gi;  // temp followed by spat
};

// Spatio-temporal guidance: an LSTM over each agent's own history gives the
// temporal state; a permutation-invariant aggregation over the other agents
// of the scene gives the spatial state.
class GuidanceEncoder {
 public:
  GuidanceEncoder() = default;
  GuidanceEncoder(nn::ParamStore& store, const EncoderConfig& config, std::mt19937_64& rng);

  int hidden_t() const { return config_.hidden_t; }
  int hidden_s() const { return config_.hidden_s; }
  int guidance_dim() const { return config_.hidden_t + config_.hidden_s; }

  // agents x hidden_t; depends only on each agent's own history.
  nn::Var temporal(const Batch& batch) const;
  // agents x hidden_s: tanh(W [temp_n, mean_m temp_m, mean offset to m] + b),
  // mean over the agent's neighbors (zeros when it has none).
  nn::Var spatial(const Batch& batch, const nn::Var& temporal) const;
  // agents x (hidden_t + hidden_s)
  nn::Var guidance(const Batch& batch) const;

  const nn::Lstm& lstm() const { return lstm_; }
  const nn::Linear& aggregate() const { return aggregate_; }

 private:
  EncoderConfig config_;
  nn::Lstm lstm_;
  nn::Linear aggregate_;
};

Eigen::VectorXd encode_temporal(const TrajectoryWindow& window, const GuidanceEncoder& encoder,
                                const Normalizer& norm);
std::vector<GuidanceFeature> encode_scene(const Scene& scene, const GuidanceEncoder& encoder,
                                          const Normalizer& norm);

}  // namespace ded
