#include "geoformal/pretrain/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace geoformal::pretrain {

using namespace tensor;

SequenceTooShort::SequenceTooShort(std::size_t n)
    : DataError("sequence of " + std::to_string(n) + " tokens is too short for next-token prediction") {}

SequenceTooLong::SequenceTooLong(std::size_t n, std::size_t max)
    : DataError("sequence of " + std::to_string(n) + " positions exceeds decoder max_len " + std::to_string(max)) {}

void DecoderConfig::validate() const {
  if (vocab_size == 0) throw DataError("decoder config: vocab_size must be set");
  if (d == 0 || n_heads == 0 || d % n_heads != 0 || ffn_hidden == 0 || max_len == 0) {
    throw DataError("decoder config: sizes must be positive and d divisible by n_heads");
  }
  if (!(init_std > 0.0)) throw DataError("decoder config: init_std must be > 0");
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"d", c.d},           {"n_layers", c.n_layers}, {"n_heads", c.n_heads},
       {"ffn_hidden", c.ffn_hidden}, {"max_len", c.max_len}, {"init_std", c.init_std}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  if (!j.is_object()) throw DataError("decoder config: expected an object");
  const nlohmann::json known = DecoderConfig{};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw DataError("decoder config: unknown key '" + key + "'");
  }
  try {
    DecoderConfig d;
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.d = j.value("d", d.d);
    c.n_layers = j.value("n_layers", d.n_layers);
    c.n_heads = j.value("n_heads", d.n_heads);
    c.ffn_hidden = j.value("ffn_hidden", d.ffn_hidden);
    c.max_len = j.value("max_len", d.max_len);
    c.init_std = j.value("init_std", d.init_std);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("decoder config: ") + e.what());
  }
}

Decoder::Decoder(DecoderConfig cfg, ParamStore& ps, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  const double sd = cfg_.init_std;
  tok_emb_ = ps.normal("dec.tok_emb", {cfg_.vocab_size, cfg_.d}, init, sd);
  pos_ = ps.normal("dec.pos", {cfg_.max_len, cfg_.d}, init, sd);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    blocks_.push_back(
        TransformerBlock::create(ps, "dec.block" + std::to_string(l), cfg_.d, cfg_.n_heads, cfg_.ffn_hidden, init, sd));
  }
  final_ln_ = LayerNorm::create(ps, "dec.final_ln", cfg_.d);
}

Tensor Decoder::embed_tokens(std::span<const TokenId> ids) const {
  for (TokenId t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) throw lang::OutOfVocab("#" + std::to_string(t));
  }
  return embedding_lookup(tok_emb_, ids);
}

Tensor Decoder::forward(const Tensor& inputs) const {
  const std::size_t t = inputs.rows();
  if (t > cfg_.max_len) throw SequenceTooLong(t, cfg_.max_len);
  if (inputs.cols() != cfg_.d) throw ShapeMismatch("decoder inputs", inputs.shape(), Shape{t, cfg_.d});
  const auto causal = causal_pattern(t);
  Tensor x = add(inputs, slice_rows(pos_, 0, t));
  for (const auto& block : blocks_) x = block(x, Tensor(), causal);
  return matmul(final_ln_(x), transpose(tok_emb_));
}

Tensor Decoder::logits(const Tensor& prefix, std::span<const TokenId> ids) const {
  if (!prefix.defined()) return forward(embed_tokens(ids));
  if (ids.empty()) return forward(prefix);
  return forward(concat({prefix, embed_tokens(ids)}, 0));
}

Decoder::Cache Decoder::empty_cache() const {
  Cache c;
  c.k.resize(blocks_.size());
  c.v.resize(blocks_.size());
  return c;
}

std::vector<double> Decoder::step(Cache& cache, const Tensor& row) const {
  NoGradGuard ng;
  if (cache.length >= cfg_.max_len) throw SequenceTooLong(cache.length + 1, cfg_.max_len);
  const std::size_t d = cfg_.d;
  Tensor x = add(row, slice_rows(pos_, cache.length, cache.length + 1));
  const std::size_t n = cache.length + 1;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& block = blocks_[l];
    const Tensor h = block.ln1(x);
    const Tensor kr = block.attn.k(h);
    const Tensor vr = block.attn.v(h);
    cache.k[l].insert(cache.k[l].end(), kr.data().begin(), kr.data().end());
    cache.v[l].insert(cache.v[l].end(), vr.data().begin(), vr.data().end());
    const Tensor keys({n, d}, cache.k[l]);
    const Tensor values({n, d}, cache.v[l]);
    x = add(x, block.attn.attend(block.attn.q(h), keys, values));
    x = add(x, block.ffn(block.ln2(x)));
  }
  cache.length = n;
  const Tensor logits = matmul(final_ln_(x), transpose(tok_emb_));
  const Tensor lp = log_softmax(logits, 1);
  return {lp.data().begin(), lp.data().end()};
}

std::vector<double> Decoder::step_token(Cache& cache, TokenId id) const {
  const TokenId ids[] = {id};
  NoGradGuard ng;
  return step(cache, embed_tokens(ids));
}

Tensor lm_loss(const Decoder& decoder, std::span<const TokenId> ids) {
  if (ids.size() < 2) throw SequenceTooShort(ids.size());
  const Tensor logits = decoder.logits(Tensor(), ids.first(ids.size() - 1));
  return cross_entropy(logits, ids.subspan(1));
}

}  // namespace geoformal::pretrain
