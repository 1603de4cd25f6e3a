#include "ded/nn/adam.hpp"

#include <cmath>
#include <map>
#include <string>

namespace ded::nn {

Adam::Adam(ParamStore& store, AdamOptions options) : store_(store), options_(options) {
  for (const auto& p : store_.items()) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
  std::map<std::string, std::size_t> ids;
  for (const auto& p : store_.items()) {
    const std::string key = options_.clip_by_group ? p.name.substr(0, p.name.find('.')) : std::string();
    group_.push_back(ids.try_emplace(key, ids.size()).first->second);
  }
  groups_ = ids.size();
}

double Adam::step() {
  auto& params = store_.items();
  std::vector<double> sq(groups_, 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].var.grad().size() != 0) sq[group_[i]] += params[i].var.grad().squaredNorm();
  }
  std::vector<double> factor(groups_, 1.0);
  double total = 0.0;
  for (std::size_t g = 0; g < groups_; ++g) {
    total += sq[g];
    const double n = std::sqrt(sq[g]);
    if (options_.clip_norm > 0.0 && n > options_.clip_norm) factor[g] = options_.clip_norm / n;
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& var = params[i].var;
    if (var.grad().size() == 0) continue;
    const Matrix g = var.grad() * factor[group_[i]];
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    var.mutable_value().array() -=
        options_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + options_.eps);
  }
  store_.zero_grad();
  return std::sqrt(total);
}

}  // namespace ded::nn
