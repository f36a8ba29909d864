#include "geoformal/tensor/nn.hpp"

namespace geoformal::tensor {

Linear Linear::create(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      double stddev, bool bias) {
  Linear l;
  l.w = ps.normal(name + ".w", {in, out}, rng, stddev);
  if (bias) l.b = ps.zeros(name + ".b", {out});
  return l;
}

LayerNorm LayerNorm::create(ParamStore& ps, const std::string& name, std::size_t d) {
  return {ps.ones(name + ".g", {d}), ps.zeros(name + ".b", {d})};
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& ps, const std::string& name, std::size_t d,
                                              std::size_t heads, Rng& rng, double stddev) {
  if (heads == 0 || d % heads != 0) {
    throw ShapeMismatch("attention: width " + std::to_string(d) + " not divisible into " + std::to_string(heads) +
                        " heads");
  }
  MultiHeadAttention m;
  m.q = Linear::create(ps, name + ".q", d, d, rng, stddev);
  m.k = Linear::create(ps, name + ".k", d, d, rng, stddev);
  m.v = Linear::create(ps, name + ".v", d, d, rng, stddev);
  m.o = Linear::create(ps, name + ".o", d, d, rng, stddev);
  m.heads = heads;
  return m;
}

Tensor MultiHeadAttention::operator()(const Tensor& xq, const Tensor& xkv, const Tensor& key_mask,
                                      std::span<const std::uint8_t> allow, AttentionStats* stats) const {
  return attend(q(xq), k(xkv), v(xkv), key_mask, allow, stats);
}

Tensor MultiHeadAttention::attend(const Tensor& qp, const Tensor& kp, const Tensor& vp, const Tensor& key_mask,
                                  std::span<const std::uint8_t> allow, AttentionStats* stats) const {
  if (heads == 1) return o(attention(qp, kp, vp, key_mask, allow, stats));
  const std::size_t d = qp.cols();
  const std::size_t hd = d / heads;
  std::vector<Tensor> outs;
  outs.reserve(heads);
  AttentionStats local;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * hd;
    outs.push_back(attention(slice_cols(qp, c0, c0 + hd), slice_cols(kp, c0, c0 + hd), slice_cols(vp, c0, c0 + hd),
                             key_mask, allow, &local));
  }
  // Masking is shared by all heads; count each query row once.
  if (stats != nullptr) stats->all_masked_rows += local.all_masked_rows / heads;
  return o(concat(outs, 1));
}

FeedForward FeedForward::create(ParamStore& ps, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng,
                                double stddev) {
  return {Linear::create(ps, name + ".up", d, hidden, rng, stddev),
          Linear::create(ps, name + ".down", hidden, d, rng, stddev)};
}

TransformerBlock TransformerBlock::create(ParamStore& ps, const std::string& name, std::size_t d, std::size_t heads,
                                          std::size_t hidden, Rng& rng, double stddev) {
  TransformerBlock b;
  b.ln1 = LayerNorm::create(ps, name + ".ln1", d);
  b.attn = MultiHeadAttention::create(ps, name + ".attn", d, heads, rng, stddev);
  b.ln2 = LayerNorm::create(ps, name + ".ln2", d);
  b.ffn = FeedForward::create(ps, name + ".ffn", d, hidden, rng, stddev);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x, const Tensor& key_mask, std::span<const std::uint8_t> allow,
                                    AttentionStats* stats) const {
  const Tensor h = ln1(x);
  const Tensor y = add(x, attn(h, h, key_mask, allow, stats));
  return add(y, ffn(ln2(y)));
}

std::vector<std::uint8_t> causal_pattern(std::size_t n) {
  std::vector<std::uint8_t> out(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) out[i * n + j] = 1;
  }
  return out;
}

}  // namespace geoformal::tensor
