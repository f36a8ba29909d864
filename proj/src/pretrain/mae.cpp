#include "geoformal/pretrain/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geoformal::pretrain {

using namespace tensor;

DegenerateRatio::DegenerateRatio(double ratio, std::size_t n)
    : DataError("mask ratio " + std::to_string(ratio) + " over " + std::to_string(n) +
                " patches masks none or all of them") {}

MAEBatch mae_mask(const Tensor& patches, double ratio, Rng& rng) {
  if (patches.dim() != 2) throw ShapeMismatch("mae_mask: patches must be (N, p*p), got " + shape_str(patches.shape()));
  const std::size_t n = patches.rows();
  if (!(ratio > 0.0 && ratio < 1.0)) throw DegenerateRatio(ratio, n);
  const auto k = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  if (k == 0 || k >= n) throw DegenerateRatio(ratio, n);

  // Partial Fisher-Yates: the first k entries become the masked set.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.index(n - i)]);
  MAEBatch b;
  b.patches = patches;
  b.ratio = ratio;
  b.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  b.visible.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(b.masked.begin(), b.masked.end());
  std::sort(b.visible.begin(), b.visible.end());
  return b;
}

namespace {

std::vector<std::int32_t> as_ids(const std::vector<std::size_t>& v) {
  return std::vector<std::int32_t>(v.begin(), v.end());
}

}  // namespace

Tensor mae_loss(const Tensor& reconstructed, const Tensor& original, const MAEBatch& batch) {
  if (reconstructed.shape() != original.shape()) {
    throw ShapeMismatch("mae_loss", reconstructed.shape(), original.shape());
  }
  const auto ids = as_ids(batch.masked);
  return mse_loss(embedding_lookup(reconstructed, ids), embedding_lookup(original, ids));
}

void MAEConfig::validate() const {
  if (patch_dim == 0 || n_patches < 2 || d == 0 || n_heads == 0 || d % n_heads != 0 || ffn_hidden == 0) {
    throw DataError("mae config: sizes must be positive and d divisible by n_heads");
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) throw DegenerateRatio(mask_ratio, n_patches);
  if (!(init_std > 0.0)) throw DataError("mae config: init_std must be > 0");
}

void to_json(nlohmann::json& j, const MAEConfig& c) {
  j = {{"patch_dim", c.patch_dim},   {"n_patches", c.n_patches},   {"d", c.d},
       {"n_heads", c.n_heads},       {"ffn_hidden", c.ffn_hidden}, {"enc_layers", c.enc_layers},
       {"dec_layers", c.dec_layers}, {"mask_ratio", c.mask_ratio}, {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, MAEConfig& c) {
  if (!j.is_object()) throw DataError("mae config: expected an object");
  const nlohmann::json known = MAEConfig{};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw DataError("mae config: unknown key '" + key + "'");
  }
  try {
    MAEConfig d;
    c.patch_dim = j.value("patch_dim", d.patch_dim);
    c.n_patches = j.value("n_patches", d.n_patches);
    c.d = j.value("d", d.d);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
    c.enc_layers = j.value("enc_layers", d.enc_layers);
    c.dec_layers = j.value("dec_layers", d.dec_layers);
    c.mask_ratio = j.value("mask_ratio", d.mask_ratio);
    c.init_std = j.value("init_std", d.init_std);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mae config: ") + e.what());
  }
  c.validate();
}

MAE::MAE(MAEConfig cfg, ParamStore& ps, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  const double sd = cfg_.init_std;
  embed_ = Linear::create(ps, "mae.embed", cfg_.patch_dim, cfg_.d, init, sd);
  pos_ = ps.normal("mae.pos", {cfg_.n_patches, cfg_.d}, init, sd);
  for (std::size_t l = 0; l < cfg_.enc_layers; ++l) {
    enc_.push_back(TransformerBlock::create(ps, "mae.enc" + std::to_string(l), cfg_.d, cfg_.n_heads, cfg_.ffn_hidden,
                                            init, sd));
  }
  enc_ln_ = LayerNorm::create(ps, "mae.enc_ln", cfg_.d);
  dec_in_ = Linear::create(ps, "mae.dec_in", cfg_.d, cfg_.d, init, sd);
  mask_token_ = ps.normal("mae.mask_token", {1, cfg_.d}, init, sd);
  dec_pos_ = ps.normal("mae.dec_pos", {cfg_.n_patches, cfg_.d}, init, sd);
  for (std::size_t l = 0; l < cfg_.dec_layers; ++l) {
    dec_.push_back(TransformerBlock::create(ps, "mae.dec" + std::to_string(l), cfg_.d, cfg_.n_heads, cfg_.ffn_hidden,
                                            init, sd));
  }
  dec_ln_ = LayerNorm::create(ps, "mae.dec_ln", cfg_.d);
  head_ = Linear::create(ps, "mae.head", cfg_.d, cfg_.patch_dim, init, sd);
}

Tensor MAE::encode_visible(const Tensor& patches, const std::vector<std::size_t>& visible) const {
  if (patches.dim() != 2 || patches.cols() != cfg_.patch_dim || patches.rows() != cfg_.n_patches) {
    throw ShapeMismatch("mae patches", patches.shape(), Shape{cfg_.n_patches, cfg_.patch_dim});
  }
  const auto ids = as_ids(visible);
  Tensor x = add(embed_(embedding_lookup(patches, ids)), embedding_lookup(pos_, ids));
  for (const auto& block : enc_) x = block(x);
  return enc_ln_(x);
}

Tensor MAE::encode(const Tensor& patches) const {
  std::vector<std::size_t> all(cfg_.n_patches);
  std::iota(all.begin(), all.end(), 0);
  return encode_visible(patches, all);
}

Tensor MAE::reconstruct(const MAEBatch& batch) const {
  const Tensor enc = dec_in_(encode_visible(batch.patches, batch.visible));
  // Row v of `table` is visible patch v; the last row is the mask token.
  const Tensor table = concat({enc, mask_token_}, 0);
  std::vector<std::int32_t> rows(cfg_.n_patches, static_cast<std::int32_t>(batch.visible.size()));
  for (std::size_t v = 0; v < batch.visible.size(); ++v) rows[batch.visible[v]] = static_cast<std::int32_t>(v);
  Tensor x = add(embedding_lookup(table, rows), dec_pos_);
  for (const auto& block : dec_) x = block(x);
  return head_(dec_ln_(x));
}

}  // namespace geoformal::pretrain
