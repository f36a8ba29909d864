#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoformal/gsformer/config.hpp"
#include "geoformal/lang/vocab.hpp"
#include "geoformal/tensor/nn.hpp"

namespace geoformal::gsformer {

using lang::TokenId;
using tensor::Rng;
using tensor::Tensor;

class BatchTooSmall : public Error {
 public:
  explicit BatchTooSmall(std::size_t b);
};

/// Retention masks per SGS stage. masks[0] is the all-ones initial mask;
/// probs[i] holds the keep probabilities that produced masks[i + 1].
struct SGSState {
  std::vector<Tensor> masks;
  std::vector<Tensor> probs;

  std::size_t stages() const { return masks.size(); }
  std::size_t patches() const { return masks.empty() ? 0 : masks[0].numel(); }
};

struct AlignedFeatures {
  Tensor f_g;       // (n_queries, d)
  Tensor text_cls;  // (d), undefined when no caption was given
};

struct ForwardResult {
  AlignedFeatures features;
  SGSState state;
  Tensor caption_logits;  // (L, vocab) predicting caption_targets
  std::vector<TokenId> caption_targets;
  std::size_t all_masked_rows = 0;
};

struct LossBreakdown {
  Tensor l_contrast;
  Tensor l_match;
  Tensor l_caption;
  Tensor l_align;
  Tensor l_spr;
  Tensor l_total;
  std::vector<double> keep_rate;  // mean mask value per stage

  nlohmann::json to_json() const;
};

struct PretrainPair {
  Tensor patches;                // (N, d_in)
  std::vector<TokenId> caption;  // caption tokens without BOS/EOS
};

/// Context-conditioned queries: learned + proj(mean_pool(attn(learned, feats, feats))).
Tensor gqg_queries(const Tensor& patch_feats, const Tensor& learned_queries, const tensor::Linear& proj);

/// One SGS stage: keep/drop logits from a linear layer over patch features,
/// sampled with Gumbel-Softmax; the keep column multiplies the previous mask.
/// Returns (new mask, keep probabilities).
std::pair<Tensor, Tensor> sgs_update_mask(const Tensor& prev_mask, const Tensor& patch_feats,
                                          const tensor::Linear& head, double tau, bool hard, Rng& rng);

/// (1 / (K N)) * sum over stages and patches of |m|.
Tensor sparsification_loss(const SGSState& state);

/// Symmetric InfoNCE between row-aligned embeddings, both l2-normalized,
/// with logits scaled by exp(log_scale).
Tensor info_nce(const Tensor& img, const Tensor& txt, const Tensor& log_scale);

class GSFormer {
 public:
  /// Registers parameters under "gsf." in `ps`.
  GSFormer(GSFormerConfig cfg, tensor::ParamStore& ps, Rng& init);

  const GSFormerConfig& config() const { return cfg_; }

  /// Patch features projected to the model width: (N, d).
  Tensor embed_patches(const Tensor& patches) const;
  Tensor queries(const Tensor& patch_feats) const;

  /// Full forward. The joint self-attention lets queries see only queries,
  /// and caption positions see all queries plus earlier caption positions,
  /// so F_g does not depend on the caption and the same pass yields the
  /// caption-generation logits. `rng` is only read, so the Gumbel noise is a
  /// function of its state.
  ForwardResult forward(const Tensor& patches, std::span<const TokenId> caption, const Rng& rng, bool hard) const;

  /// F_g alone, as used downstream where no caption exists.
  Tensor encode_geometry(const Tensor& patches, const Rng& rng, bool hard, SGSState* state = nullptr) const;

  /// Bidirectional text-only pass; returns the BOS row.
  Tensor encode_text(std::span<const TokenId> caption) const;

  /// (contrast, match, caption) over a batch of forward results.
  std::tuple<Tensor, Tensor, Tensor> alignment_loss(const std::vector<ForwardResult>& batch) const;

  /// L_p = L_align + lambda * L_spr over a batch. Sample b draws its noise
  /// from rng.split(b).
  LossBreakdown pretrain_loss(const std::vector<PretrainPair>& batch, const Rng& rng, bool hard = false,
                              double tau_override = 0.0) const;

  /// Matching probability for one (diagram, caption) pair.
  Tensor match_logits(const Tensor& pooled_img, const Tensor& text_cls) const;

 private:
  struct Layer {
    tensor::LayerNorm ln_self, ln_cross, ln_ffn;
    tensor::MultiHeadAttention self_attn, cross_attn;
    tensor::FeedForward ffn;
  };

  ForwardResult forward_at(const Tensor& patches, std::span<const TokenId> caption, const Rng& rng, bool hard,
                           double tau) const;
  Tensor run_layers(Tensor x, std::size_t n_query_rows, std::span<const std::uint8_t> allow, const Tensor& feats,
                    const Rng& rng, bool hard, double tau, SGSState* state, std::size_t* masked_rows) const;
  std::vector<TokenId> text_input(std::span<const TokenId> caption) const;
  Tensor embed_text(std::span<const TokenId> ids) const;

  GSFormerConfig cfg_;
  Tensor learned_queries_;
  tensor::Linear gqg_proj_;
  tensor::Linear patch_in_;
  tensor::LayerNorm patch_ln_;
  Tensor tok_emb_;
  Tensor text_pos_;
  std::vector<Layer> layers_;
  std::vector<tensor::Linear> sgs_heads_;  // one per entry of sgs_layers, in order
  tensor::LayerNorm final_ln_;
  tensor::Linear itc_img_, itc_txt_;
  Tensor logit_scale_;
  tensor::Linear itm_hidden_, itm_out_;
};

}  // namespace geoformal::gsformer
