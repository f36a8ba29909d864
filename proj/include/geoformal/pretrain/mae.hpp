#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "geoformal/tensor/nn.hpp"

namespace geoformal::pretrain {

using tensor::Rng;
using tensor::Tensor;

class DegenerateRatio : public DataError {
 public:
  DegenerateRatio(double ratio, std::size_t n);
};

struct MAEBatch {
  Tensor patches;                   // (N, p*p)
  std::vector<std::size_t> masked;  // ascending
  std::vector<std::size_t> visible; // ascending
  double ratio = 0.0;
};

/// Masks a uniformly random subset of exactly round(ratio * N) patches.
MAEBatch mae_mask(const Tensor& patches, double ratio, Rng& rng);

/// Mean squared error over the masked patches only.
Tensor mae_loss(const Tensor& reconstructed, const Tensor& original, const MAEBatch& batch);

struct MAEConfig {
  std::size_t patch_dim = 64;
  std::size_t n_patches = 64;
  std::size_t d = 64;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 128;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 1;
  double mask_ratio = 0.75;
  double init_std = 0.02;

  void validate() const;
};

void to_json(nlohmann::json& j, const MAEConfig& c);
void from_json(const nlohmann::json& j, MAEConfig& c);

/// Patch encoder trained by masked reconstruction, plus its lightweight
/// decoder. Parameters live under "mae.".
class MAE {
 public:
  MAE(MAEConfig cfg, tensor::ParamStore& ps, Rng& init);

  const MAEConfig& config() const { return cfg_; }

  /// Features of every patch with nothing masked: (N, d).
  Tensor encode(const Tensor& patches) const;
  /// Features of the listed patches only.
  Tensor encode_visible(const Tensor& patches, const std::vector<std::size_t>& visible) const;
  /// Pixel predictions for every position: (N, patch_dim).
  Tensor reconstruct(const MAEBatch& batch) const;
  Tensor loss(const MAEBatch& batch) const { return mae_loss(reconstruct(batch), batch.patches, batch); }

 private:
  MAEConfig cfg_;
  tensor::Linear embed_;
  Tensor pos_;
  std::vector<tensor::TransformerBlock> enc_;
  tensor::LayerNorm enc_ln_;
  tensor::Linear dec_in_;
  Tensor mask_token_;
  Tensor dec_pos_;
  std::vector<tensor::TransformerBlock> dec_;
  tensor::LayerNorm dec_ln_;
  tensor::Linear head_;
};

}  // namespace geoformal::pretrain
