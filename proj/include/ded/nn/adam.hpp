#pragma once

#include "ded/nn/layers.hpp"

#include <vector>

namespace ded::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // gradient-norm clip; 0 disables
  // Clip each parameter group (name prefix before the first '.') on its
  // own norm instead of the norm over all parameters.
  bool clip_by_group = false;
};

class Adam {
 public:
  Adam(ParamStore& store, AdamOptions options);

  // Applies one update from the accumulated gradients, then zeroes them.
  // Returns the pre-clip gradient norm over all parameters.
  double step();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

 private:
  ParamStore& store_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::vector<std::size_t> group_;  // group index per parameter
  std::size_t groups_ = 0;
  long long t_ = 0;
};

}  // namespace ded::nn
