#pragma once

#include "ded/batch.hpp"
#include "ded/calibrate_decode.hpp"
#include "ded/config.hpp"
#include "ded/endpoint_diffusion.hpp"
#include "ded/endpoint_transformer.hpp"
#include "ded/guidance_encoder.hpp"
#include "ded/nn/layers.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ded {

// Which endpoint source feeds the trajectory decoder.
//   full  : EP candidates calibrated against the ED distribution
//   no_ep : mean of the ED distribution
//   no_ed : EP candidate with the highest confidence
//   none  : no endpoint (decoder conditioned on history and guidance only)
enum class Variant { full, no_ed, no_ep, none };
Variant parse_variant(const std::string& s);
std::string to_string(Variant v);
bool uses_diffusion(Variant v);
bool uses_endpoint_predictor(Variant v);

struct ModelConfig {
  int hist_len = kHistLen;
  int fut_len = kFutLen;
  EncoderConfig encoder;
  DenoiserConfig denoiser;
  int diffusion_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  int samples = 100;
  int loss_draws = 4;
  DensityKind density = DensityKind::gaussian;
  EndpointTransformerConfig ep;
  DecoderConfig tp;
  int report_modes = 3;

  static ModelConfig from(const Config& config);
};

struct LossWeights {
  double diffusion = 1.0;
  double endpoint = 1.0;
  double trajectory = 1.0;
};

struct AgentPrediction {
  std::int64_t agent_id = 0;
  GaussianTrajectory trajectory;  // decoded from the selected endpoint
  std::optional<Vec2> endpoint;   // absent for Variant::none
  int chosen_candidate = -1;
  std::optional<EndpointSampleSet> distribution;
  std::optional<EndpointCandidates> candidates;
  std::vector<int> ranked_modes;  // best-j candidates by NLL (full only)
};

class Model {
 public:
  Model(const ModelConfig& config, const Normalizer& norm, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const Normalizer& normalizer() const { return norm_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  const GuidanceEncoder& encoder() const { return encoder_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const EndpointTransformer& endpoint_predictor() const { return ep_; }
  const TrajectoryDecoder& decoder() const { return decoder_; }
  TrajectoryDecoder& decoder() { return decoder_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  struct Losses {
    nn::Var diffusion;   // empty when gated off
    nn::Var endpoint;    // empty when gated off
    nn::Var trajectory;
    nn::Var total;
  };
  // Training objective. The decoder is conditioned on the ground-truth
  // endpoint; modules unused by the variant contribute no loss.
  Losses losses(const Batch& batch, const LossWeights& weights, Variant variant,
                std::mt19937_64& rng) const;

  // Inference over one scene. Random streams derive from (seed, agent id,
  // end frame) so results do not depend on batching.
  std::vector<AgentPrediction> predict(const Scene& scene, Variant variant, std::uint64_t seed,
                                       bool all_candidates = false) const;

  // Decoded mean trajectories for every EP candidate of every agent
  // (agents x C), for best-of-C scoring.
  std::vector<std::vector<Matrix>> decode_all_candidates(const Scene& scene) const;

  // Multiply-accumulate estimate for one agent's full inference.
  double macs_per_agent(Variant variant) const;

 private:
  ModelConfig config_;
  Normalizer norm_;
  nn::ParamStore params_;
  NoiseSchedule schedule_;
  GuidanceEncoder encoder_;
  Denoiser denoiser_;
  EndpointTransformer ep_;
  TrajectoryDecoder decoder_;
};

std::uint64_t agent_stream(std::uint64_t seed, const TrajectoryWindow& window);

}  // namespace ded
