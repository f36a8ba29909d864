#include "geoformal/tensor/optim.hpp"

#include <cmath>

namespace geoformal::tensor {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  double norm2 = 0.0;
  for (const auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad) norm2 += g * g;
  }
  last_norm_ = std::sqrt(norm2);
  double clip = 1.0;
  if (config_.clip_norm > 0.0 && last_norm_ > config_.clip_norm) clip = config_.clip_norm / last_norm_;

  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto& g = p.node()->grad;
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
      w[i] -= config_.lr * (update + config_.weight_decay * w[i]);
    }
    p.zero_grad();
  }
}

}  // namespace geoformal::tensor
