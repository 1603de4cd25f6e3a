#pragma once

#include "ded/batch.hpp"
#include "ded/endpoint_diffusion.hpp"
#include "ded/endpoint_transformer.hpp"
#include "ded/nn/layers.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace ded {

inline constexpr double kSigmaFloor = 1e-3;
inline constexpr double kRhoLimit = 0.999;

// Per-frame bivariate Gaussians over the future positions.
struct GaussianTrajectory {
  Matrix mu;           // F x 2, meters
  Matrix sigma;        // F x 2, meters, > 0
  Eigen::VectorXd rho;  // F, |rho| < 1
};

// Candidate with the smallest endpoint NLL under the sampled distribution;
// ties go to the lowest index.
std::pair<Vec2, int> calibrate(const EndpointCandidates& candidates, const EndpointSampleSet& dist);
// Candidate indices ordered by NLL (stable), best first, at most `keep`.
std::vector<int> rank_candidates(const EndpointCandidates& candidates,
                                 const EndpointSampleSet& dist, int keep);

struct DecoderConfig {
  int layers = 1;
  int heads = 4;
  int d_model = 64;
};

// Non-autoregressive trajectory decoder. Memory tokens are the embedded
// history frames, the guidance vector and the endpoint; one learned query
// per future frame cross-attends to the memory and a linear head emits
// (mu_x, mu_y, raw_sigma_x, raw_sigma_y, raw_rho). A linear path from
// [endpoint, last frame] is added to the means.
class TrajectoryDecoder {
 public:
  TrajectoryDecoder() = default;
  TrajectoryDecoder(nn::ParamStore& store, const DecoderConfig& config, int hist_len, int fut_len,
                    int guidance_dim, double pos_scale, std::mt19937_64& rng);

  struct Output {
    nn::Var mu;         // (agents * F) x 2, meters
    nn::Var raw_sigma;  // (agents * F) x 2
    nn::Var raw_rho;    // (agents * F) x 1
  };
  // endpoint: agents x 2 in normalized units. With use_endpoint false the
  // endpoint token and the endpoint columns of the linear path see zeros.
  Output operator()(const Batch& batch, const nn::Var& guidance, const Matrix& endpoint,
                    bool use_endpoint, double pos_scale) const;

  // Zeroes every weight that reads the endpoint input.
  void zero_endpoint_pathway();

 private:
  DecoderConfig config_;
  int hist_len_ = 0;
  int fut_len_ = 0;
  nn::Linear history_embed_;
  nn::Var history_positions_;
  nn::Linear guidance_embed_;
  nn::Linear endpoint_embed_;
  nn::Var token_types_;  // 2 x d: guidance, endpoint
  std::vector<nn::EncoderBlock> encoder_;
  nn::Var queries_;  // F x d
  nn::CrossBlock cross_;
  nn::Linear head_;
  nn::Linear skip_;  // [endpoint(2), last frame(6)] -> 2F
};

std::vector<GaussianTrajectory> to_gaussians(const TrajectoryDecoder::Output& out, int fut_len);

GaussianTrajectory decode_trajectory(const TrajectoryWindow& window, const Eigen::RowVectorXd& gi,
                                     Vec2 endpoint, const TrajectoryDecoder& decoder,
                                     const Normalizer& norm);

// Mean over frames of -log N2(truth | mu, sigma, rho), from raw parameters.
// truth: (agents * F) x 2. Averaged over all rows.
nn::Var bivariate_nll(const nn::Var& mu, const nn::Var& raw_sigma, const nn::Var& raw_rho,
                      const Matrix& truth);
double trajectory_nll_loss(const GaussianTrajectory& pred, const Matrix& truth);
double bivariate_density(Vec2 point, Vec2 mu, Vec2 sigma, double rho);

// n draws, each F x 2; per-frame Cholesky sampling from stream seed.
std::vector<Matrix> sample_trajectories(const GaussianTrajectory& pred, int n, std::uint64_t seed);

}  // namespace ded
