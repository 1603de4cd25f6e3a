#include "ded/training.hpp"

#include "ded/binary_io.hpp"
#include "ded/errors.hpp"
#include "ded/nn/adam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ded {

namespace {
constexpr const char* kMagic = "DEDCKPT\n";

double value_or_zero(const nn::Var& v) { return v ? v.value()(0, 0) : 0.0; }

void accumulate(LossSummary& acc, const Model::Losses& l, double weight) {
  acc.diffusion += weight * value_or_zero(l.diffusion);
  acc.endpoint += weight * value_or_zero(l.endpoint);
  acc.trajectory += weight * value_or_zero(l.trajectory);
  acc.total += weight * value_or_zero(l.total);
}

void scale(LossSummary& s, double f) {
  s.diffusion *= f;
  s.endpoint *= f;
  s.trajectory *= f;
  s.total *= f;
}

std::vector<Matrix> snapshot(const nn::ParamStore& store) {
  std::vector<Matrix> out;
  out.reserve(store.items().size());
  for (const auto& p : store.items()) out.push_back(p.var.value());
  return out;
}

void restore(nn::ParamStore& store, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) store.items()[i].var.mutable_value() = values[i];
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.epochs = c.get_int("train.epochs");
  t.batch = c.get_int("train.batch");
  t.lr = c.get_double("train.lr");
  t.cosine = c.get("train.lr_schedule") == "cosine";
  t.clip = c.get_double("train.clip");
  t.seed = static_cast<std::uint64_t>(std::stoull(c.get("train.seed")));
  t.weights.diffusion = c.get_double("train.w_diff");
  t.weights.endpoint = c.get_double("train.w_ep");
  t.weights.trajectory = c.get_double("train.w_traj");
  t.variant = parse_variant(c.get("train.variant"));
  if (t.epochs < 0) throw UsageError("train.epochs must be >= 0");
  if (t.batch < 1) throw UsageError("train.batch must be >= 1");
  if (!(t.lr > 0.0)) throw UsageError("train.lr must be > 0");
  if (t.weights.diffusion < 0 || t.weights.endpoint < 0 || t.weights.trajectory < 0) {
    throw UsageError("loss weights must be >= 0");
  }
  return t;
}

std::string format_log(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch\tlr\ttrain_total\ttrain_diff\ttrain_ep\ttrain_traj\tval_total\tval_diff\tval_ep\tval_traj\n";
  for (const auto& e : log) {
    os << e.epoch << '\t' << fmt(e.lr) << '\t' << fmt(e.train.total) << '\t' << fmt(e.train.diffusion)
       << '\t' << fmt(e.train.endpoint) << '\t' << fmt(e.train.trajectory) << '\t' << fmt(e.val.total)
       << '\t' << fmt(e.val.diffusion) << '\t' << fmt(e.val.endpoint) << '\t'
       << fmt(e.val.trajectory) << '\n';
  }
  return os.str();
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  BinaryWriter w(out);
  w.put_bytes(kMagic, 8);
  w.put<std::uint32_t>(ckpt.version);
  w.put_string(ckpt.config_text);
  w.put_string(ckpt.dataset_id);
  w.put_doubles(ckpt.norm.mean.data(), ckpt.norm.mean.size());
  w.put_doubles(ckpt.norm.scale.data(), ckpt.norm.scale.size());
  w.put<double>(ckpt.norm.pos_scale);
  w.put<double>(ckpt.norm.ed_scale);
  w.put<std::int32_t>(ckpt.epoch);
  w.put_string(ckpt.rng_state);
  w.put<std::uint64_t>(ckpt.params.size());
  for (const auto& [name, m] : ckpt.params) {
    w.put_string(name);
    w.put<std::int64_t>(m.rows());
    w.put<std::int64_t>(m.cols());
    w.put_doubles(m.data(), static_cast<std::size_t>(m.size()));
  }
  if (!out) throw DataError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  BinaryReader r(in);
  r.expect_magic(kMagic);
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(c.version));
  }
  c.config_text = r.get_string();
  c.dataset_id = r.get_string(4096);
  r.get_doubles(c.norm.mean.data(), c.norm.mean.size());
  r.get_doubles(c.norm.scale.data(), c.norm.scale.size());
  c.norm.pos_scale = r.get<double>();
  c.norm.ed_scale = r.get<double>();
  c.epoch = r.get<std::int32_t>();
  c.rng_state = r.get_string();
  const auto n = r.get<std::uint64_t>();
  if (n > 100000) throw DataError("checkpoint parameter count out of range");
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.get_string(4096);
    const auto rows = r.get<std::int64_t>();
    const auto cols = r.get<std::int64_t>();
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 28)) {
      throw DataError("checkpoint tensor '" + name + "' has invalid shape");
    }
    Matrix m(rows, cols);
    r.get_doubles(m.data(), static_cast<std::size_t>(m.size()));
    c.params.emplace_back(std::move(name), std::move(m));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return read_checkpoint(in);
}

Config checkpoint_config(const Checkpoint& ckpt) {
  Config c;
  c.merge_text(ckpt.config_text, "checkpoint");
  return c;
}

std::unique_ptr<Model> restore_model(const Checkpoint& ckpt) {
  const Config cfg = checkpoint_config(ckpt);
  auto model = std::make_unique<Model>(ModelConfig::from(cfg), ckpt.norm, 0);
  auto& items = model->params().items();
  if (items.size() != ckpt.params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                    " tensors, architecture expects " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, m] = ckpt.params[i];
    auto& target = items[i].var.mutable_value();
    if (name != items[i].name || m.rows() != target.rows() || m.cols() != target.cols()) {
      throw DataError("checkpoint tensor '" + name + "' does not match architecture tensor '" +
                      items[i].name + "'");
    }
    target = m;
  }
  return model;
}

Checkpoint make_checkpoint(const Model& model, const Config& config, const std::string& dataset_id,
                           int epoch, const std::mt19937_64& rng) {
  Checkpoint c;
  c.config_text = config.to_text();
  c.dataset_id = dataset_id;
  c.norm = model.normalizer();
  c.epoch = epoch;
  std::ostringstream os;
  os << rng;
  c.rng_state = os.str();
  for (const auto& p : model.params().items()) c.params.emplace_back(p.name, p.var.value());
  return c;
}

LossSummary evaluate_losses(const Model& model, const std::vector<Scene>& scenes,
                            const TrainConfig& cfg, std::uint64_t seed) {
  LossSummary sum;
  if (scenes.empty()) return sum;
  nn::NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  double agents = 0.0;
  for (std::size_t s = 0; s < scenes.size(); s += static_cast<std::size_t>(cfg.batch)) {
    std::vector<const Scene*> group;
    for (std::size_t j = s; j < std::min(scenes.size(), s + static_cast<std::size_t>(cfg.batch)); ++j) {
      group.push_back(&scenes[j]);
    }
    const Batch batch = make_batch(group, model.normalizer());
    const auto l = model.losses(batch, cfg.weights, cfg.variant, rng);
    accumulate(sum, l, batch.agents);
    agents += batch.agents;
  }
  scale(sum, 1.0 / agents);
  return sum;
}

TrainResult train(const DatasetSplit& split, const Config& config, const std::string& dataset_id,
                  std::ostream* progress) {
  if (split.train.empty()) throw UsageError("training split is empty");
  const TrainConfig cfg = TrainConfig::from(config);
  const ModelConfig mcfg = ModelConfig::from(config);
  for (const auto& scene : split.train) {
    for (const auto& w : scene.windows) {
      if (static_cast<int>(w.history.size()) != mcfg.hist_len ||
          static_cast<int>(w.future.size()) != mcfg.fut_len) {
        throw DataError("dataset window lengths do not match data.hist/data.fut");
      }
    }
  }

  const Normalizer norm = Normalizer::fit(split.train);
  Model model(mcfg, norm, cfg.seed);
  nn::Adam adam(model.params(), nn::AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.clip, true});
  std::mt19937_64 rng(mix_seed(cfg.seed, 0x7a11));

  const std::size_t n_scenes = split.train.size();
  const std::size_t per_step = static_cast<std::size_t>(cfg.batch);
  const std::size_t steps_per_epoch = (n_scenes + per_step - 1) / per_step;
  const double total_steps = static_cast<double>(steps_per_epoch) * std::max(cfg.epochs, 1);
  const std::uint64_t val_seed = mix_seed(cfg.seed, 0x5a1);

  TrainResult result;
  std::vector<Matrix> last_good = snapshot(model.params());
  std::mt19937_64 last_good_rng = rng;
  int last_good_epoch = 0;
  std::vector<std::size_t> order(n_scenes);
  long long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs && !result.diverged; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    LossSummary train_sum;
    double agents = 0.0;
    double lr = cfg.lr;
    for (std::size_t s = 0; s < n_scenes; s += per_step) {
      lr = cfg.cosine ? 0.5 * cfg.lr * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps))
                      : cfg.lr;
      adam.set_lr(lr);
      std::vector<const Scene*> group;
      for (std::size_t j = s; j < std::min(n_scenes, s + per_step); ++j) group.push_back(&split.train[order[j]]);
      const Batch batch = make_batch(group, norm);
      const auto l = model.losses(batch, cfg.weights, cfg.variant, rng);
      const double total = l.total.value()(0, 0);
      if (!std::isfinite(total)) {
        result.diverged = true;
        break;
      }
      nn::backward(l.total);
      const double grad_norm = adam.step();
      if (!std::isfinite(grad_norm)) {
        result.diverged = true;
        break;
      }
      accumulate(train_sum, l, batch.agents);
      agents += batch.agents;
      ++step;
    }
    if (result.diverged) break;
    scale(train_sum, 1.0 / agents);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train = train_sum;
    entry.val = evaluate_losses(model, split.val, cfg, val_seed);
    if (!std::isfinite(entry.train.total) || !std::isfinite(entry.val.total)) {
      result.diverged = true;
      break;
    }
    result.log.push_back(entry);
    last_good = snapshot(model.params());
    last_good_rng = rng;
    last_good_epoch = epoch;
    if (progress) {
      *progress << "epoch " << epoch << "/" << cfg.epochs << " train " << entry.train.total << " val "
                << entry.val.total << '\n';
    }
  }
  if (result.diverged) {
    restore(model.params(), last_good);
    if (progress) {
      *progress << "non-finite loss; keeping parameters from epoch " << last_good_epoch << '\n';
    }
  }
  result.checkpoint = make_checkpoint(model, config, dataset_id, last_good_epoch, last_good_rng);
  return result;
}

}  // namespace ded
