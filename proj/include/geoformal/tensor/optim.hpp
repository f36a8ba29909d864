#pragma once

#include <cstddef>
#include <vector>

#include "geoformal/tensor/tensor.hpp"

namespace geoformal::tensor {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  double clip_norm = 0.0;     // global gradient norm limit, 0 = off
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// Applies one update from the accumulated gradients, then clears them.
  void step();
  void zero_grad();
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps() const { return t_; }
  /// Gradient norm seen by the last step (before clipping).
  double last_grad_norm() const { return last_norm_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
  double last_norm_ = 0.0;
};

}  // namespace geoformal::tensor
