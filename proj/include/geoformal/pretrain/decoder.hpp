#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "geoformal/lang/vocab.hpp"
#include "geoformal/tensor/nn.hpp"

namespace geoformal::pretrain {

using lang::TokenId;
using tensor::Rng;
using tensor::Tensor;

class SequenceTooShort : public DataError {
 public:
  explicit SequenceTooShort(std::size_t n);
};

class SequenceTooLong : public DataError {
 public:
  SequenceTooLong(std::size_t n, std::size_t max);
};

struct DecoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t ffn_hidden = 256;
  std::size_t max_len = 96;
  double init_std = 0.02;

  void validate() const;
};

void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);

/// Small causal transformer language model with tied input/output
/// embeddings. Parameters live under "dec.".
class Decoder {
 public:
  Decoder(DecoderConfig cfg, tensor::ParamStore& ps, Rng& init);

  const DecoderConfig& config() const { return cfg_; }

  Tensor embed_tokens(std::span<const TokenId> ids) const;
  /// Causal forward over input rows (T, d), positions added here: (T, vocab).
  Tensor forward(const Tensor& inputs) const;
  /// forward(concat(prefix, embed_tokens(ids))); `prefix` may be undefined.
  Tensor logits(const Tensor& prefix, std::span<const TokenId> ids) const;

  /// Keys and values of every position fed so far, per layer.
  struct Cache {
    std::vector<std::vector<double>> k;
    std::vector<std::vector<double>> v;
    std::size_t length = 0;
  };

  Cache empty_cache() const;
  /// Feeds one input row (1, d) and returns log-probabilities of the next
  /// token. Runs without recording gradients.
  std::vector<double> step(Cache& cache, const Tensor& row) const;
  std::vector<double> step_token(Cache& cache, TokenId id) const;

 private:
  DecoderConfig cfg_;
  Tensor tok_emb_;
  Tensor pos_;
  std::vector<tensor::TransformerBlock> blocks_;
  tensor::LayerNorm final_ln_;
};

/// Mean next-token cross entropy of `ids` under causal masking.
Tensor lm_loss(const Decoder& decoder, std::span<const TokenId> ids);

}  // namespace geoformal::pretrain
