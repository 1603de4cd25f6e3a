#pragma once

#include "ded/config.hpp"
#include "ded/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace ded {

struct TrainConfig {
  int epochs = 100;
  int batch = 16;  // scenes per step
  double lr = 1e-3;
  bool cosine = true;
  double clip = 10.0;
  std::uint64_t seed = 0;
  LossWeights weights;
  Variant variant = Variant::full;

  static TrainConfig from(const Config& config);
};

struct LossSummary {
  double diffusion = 0.0;
  double endpoint = 0.0;
  double trajectory = 0.0;
  double total = 0.0;
  friend bool operator==(const LossSummary&, const LossSummary&) = default;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  LossSummary train;
  LossSummary val;
  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

// Tab-separated, one header line plus one line per epoch, full precision.
std::string format_log(const std::vector<EpochLog>& log);

inline constexpr std::uint32_t kCheckpointVersion = 2;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::string dataset_id;
  Normalizer norm;
  int epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Matrix>> params;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Config checkpoint_config(const Checkpoint& ckpt);
// Rebuilds the model and copies the stored parameters; DataError when the
// stored tensors do not match the architecture in the config.
std::unique_ptr<Model> restore_model(const Checkpoint& ckpt);
Checkpoint make_checkpoint(const Model& model, const Config& config, const std::string& dataset_id,
                           int epoch, const std::mt19937_64& rng);

// Mean losses over the scenes, with gradients disabled and a fixed stream.
LossSummary evaluate_losses(const Model& model, const std::vector<Scene>& scenes,
                            const TrainConfig& cfg, std::uint64_t seed);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  bool diverged = false;  // stopped on a non-finite loss; checkpoint is the last good epoch
};

// Progress lines go to `progress` when non-null.
TrainResult train(const DatasetSplit& split, const Config& config, const std::string& dataset_id,
                  std::ostream* progress = nullptr);

}  // namespace ded
