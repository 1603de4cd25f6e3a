#include "ded/config.hpp"

#include "ded/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ded {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : Config::registry()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

bool parses_as_int(const std::string& v) {
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  return ec == std::errc() && p == v.data() + v.size();
}

bool parses_as_real(const std::string& v) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  return ec == std::errc() && p == v.data() + v.size();
}

}  // namespace

const std::vector<ConfigKey>& Config::registry() {
  using V = ValueType;
  static const std::vector<ConfigKey> keys = {
      {"train.seed", "0", V::integer, {}, "global seed (DED_SEED overrides)"},
      {"data.radius", "50", V::real, {}, "scene neighbor radius, meters"},
      {"data.stride", "5", V::integer, {}, "window stride in kept (5 Hz) frames"},
      {"data.hist", "15", V::integer, {}, "history frames"},
      {"data.fut", "25", V::integer, {}, "future frames"},
      {"encoder.hidden_t", "64", V::integer, {}, "temporal LSTM width"},
      {"encoder.hidden_s", "64", V::integer, {}, "spatial aggregation width"},
      {"diffusion.K", "100", V::integer, {}, "diffusion steps"},
      {"diffusion.beta_start", "0.0001", V::real, {}, "first beta"},
      {"diffusion.beta_end", "0.05", V::real, {}, "last beta"},
      {"diffusion.samples", "100", V::integer, {}, "endpoint samples per agent"},
      {"diffusion.density", "gaussian", V::choice, {"gaussian", "kde"}, "density fitted to samples"},
      {"diffusion.hidden", "128", V::integer, {}, "denoiser hidden width"},
      {"diffusion.time_embed", "32", V::integer, {}, "step embedding width"},
      {"diffusion.loss_draws", "4", V::integer, {}, "noise draws per agent per step"},
      {"ep.layers", "2", V::integer, {}, "endpoint transformer blocks"},
      {"ep.heads", "4", V::integer, {}, "attention heads"},
      {"ep.d_model", "64", V::integer, {}, "model width"},
      {"ep.candidates", "20", V::integer, {}, "endpoint candidates C"},
      {"tp.layers", "1", V::integer, {}, "decoder memory encoder blocks"},
      {"tp.heads", "4", V::integer, {}, "decoder attention heads"},
      {"tp.d_model", "64", V::integer, {}, "decoder width"},
      {"tp.report_modes", "3", V::integer, {}, "ranked modes kept for multimodal output"},
      {"train.epochs", "100", V::integer, {}, "epochs"},
      {"train.batch", "16", V::integer, {}, "scenes per step"},
      {"train.lr", "0.001", V::real, {}, "Adam learning rate"},
      {"train.lr_schedule", "cosine", V::choice, {"constant", "cosine"}, "learning-rate decay"},
      {"train.clip", "10", V::real, {}, "per-module gradient-norm clip (0 disables)"},
      {"train.w_diff", "1", V::real, {}, "diffusion loss weight"},
      {"train.w_ep", "1", V::real, {}, "endpoint loss weight"},
      {"train.w_traj", "1", V::real, {}, "trajectory loss weight"},
      {"train.variant", "full", V::choice, {"full", "no_ed", "no_ep", "none"}, "module wiring"},
      {"eval.mode", "calibrated", V::choice, {"calibrated", "best_of_C"}, "scoring mode"},
      {"eval.kalman_accel_sigma", "1", V::real, {}, "CV Kalman process noise, m/s^2"},
      {"eval.kalman_obs_sigma", "0.5", V::real, {}, "CV Kalman observation noise, m"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : registry()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& raw) {
  const ConfigKey* info = find_key(key);
  if (info == nullptr) throw UsageError("unknown config key '" + key + "'");
  const std::string value = trim(raw);
  switch (info->type) {
    case ValueType::integer:
      if (!parses_as_int(value)) throw UsageError(key + " expects an integer, got '" + value + "'");
      break;
    case ValueType::real:
      if (!parses_as_real(value)) throw UsageError(key + " expects a number, got '" + value + "'");
      break;
    case ValueType::choice:
      if (std::find(info->choices.begin(), info->choices.end(), value) == info->choices.end()) {
        throw UsageError(key + " has no option '" + value + "'");
      }
      break;
  }
  values_[key] = value;
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const auto& v = get(key);
  long long x = 0;
  std::from_chars(v.data(), v.data() + v.size(), x);
  return static_cast<int>(x);
}

double Config::get_double(const std::string& key) const {
  const auto& v = get(key);
  double x = 0;
  std::from_chars(v.data(), v.data() + v.size(), x);
  return x;
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ded
