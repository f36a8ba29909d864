#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "geoformal/tensor/ops.hpp"
#include "geoformal/tensor/params.hpp"

namespace geoformal::tensor {

struct Linear {
  Tensor w;  // (in, out)
  Tensor b;  // (out) or undefined

  static Linear create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       double stddev, bool bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(ParamStore& ps, const std::string& name, std::size_t d);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Multi-head scaled dot-product attention with input and output projections.
struct MultiHeadAttention {
  Linear q, k, v, o;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamStore& ps, const std::string& name, std::size_t d, std::size_t heads,
                                   Rng& rng, double stddev);

  Tensor operator()(const Tensor& xq, const Tensor& xkv, const Tensor& key_mask = Tensor(),
                    std::span<const std::uint8_t> allow = {}, AttentionStats* stats = nullptr) const;

  /// Attention over already-projected queries/keys/values followed by the
  /// output projection. Lets callers keep a key/value cache.
  Tensor attend(const Tensor& qp, const Tensor& kp, const Tensor& vp, const Tensor& key_mask = Tensor(),
                std::span<const std::uint8_t> allow = {}, AttentionStats* stats = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  static FeedForward create(ParamStore& ps, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng,
                            double stddev);
  Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
};

/// Pre-norm self-attention block: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  FeedForward ffn;

  static TransformerBlock create(ParamStore& ps, const std::string& name, std::size_t d, std::size_t heads,
                                 std::size_t hidden, Rng& rng, double stddev);
  Tensor operator()(const Tensor& x, const Tensor& key_mask = Tensor(), std::span<const std::uint8_t> allow = {},
                    AttentionStats* stats = nullptr) const;
};

/// Row-major (n x n) lower-triangular allow pattern.
std::vector<std::uint8_t> causal_pattern(std::size_t n);

}  // namespace geoformal::tensor
