#pragma once

#include "ded/batch.hpp"
#include "ded/nn/layers.hpp"

#include <vector>

namespace ded {

// softmax(Q K^T / sqrt(d_k)) V on plain matrices.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v);

struct EndpointTransformerConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int candidates = 20;
};

struct EndpointCandidates {
  Matrix points;            // C x 2, meters, origin-centered
  Eigen::VectorXd logits;   // C confidence logits
};

inline constexpr double kHeadScale = 0.1;
inline constexpr double kAnchorSpread = 0.5;  // in units of ed_scale

// History-only endpoint predictor: per-frame embedding plus learned
// positions, a stack of self-attention encoder blocks, mean pooling, and C
// parallel heads each emitting an endpoint and a confidence logit. Each
// endpoint is a prediction shared by all heads (linear in the pooled
// features and the last observed frame) plus a fixed anchor and a scaled
// per-head residual. Anchors depend only on C, not on the model seed.
// Like the diffusion model, outputs are offsets from the kinematic endpoint
// in units of Normalizer::ed_scale.
class EndpointTransformer {
 public:
  EndpointTransformer() = default;
  EndpointTransformer(nn::ParamStore& store, const EndpointTransformerConfig& config, int hist_len,
                      std::mt19937_64& rng);

  struct Output {
    nn::Var endpoints;  // agents x 2C, normalized offsets (x0, y0, x1, y1, ...)
    nn::Var logits;     // agents x C
  };
  Output operator()(const Batch& batch) const;
  int candidates() const { return config_.candidates; }
  const std::vector<nn::EncoderBlock>& blocks() const { return blocks_; }

 private:
  EndpointTransformerConfig config_;
  int hist_len_ = 0;
  nn::Linear embed_;
  nn::Var positions_;
  std::vector<nn::EncoderBlock> blocks_;
  nn::Linear head_;
  nn::Linear shared_;
  nn::Linear skip_;
  Matrix anchors_;  // 1 x 2C, fixed
};

EndpointCandidates predict_endpoints(const TrajectoryWindow& window,
                                     const EndpointTransformer& model, const Normalizer& norm);
// Candidates for every agent of a batch, in meters.
std::vector<EndpointCandidates> to_candidates(const EndpointTransformer::Output& out,
                                              const Batch& batch, const Normalizer& norm);

// Winner-takes-all loss averaged over agents: the smallest squared distance
// between a candidate and the ground truth, plus binary cross-entropy that
// labels the winning candidate 1 and the others 0.
// endpoints: agents x 2C, logits: agents x C, truth: agents x 2.
nn::Var endpoint_loss(const nn::Var& endpoints, const nn::Var& logits, const Matrix& truth);

}  // namespace ded
