#include "geoformal/gsformer/gsformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace geoformal::gsformer {

using namespace tensor;

BatchTooSmall::BatchTooSmall(std::size_t b)
    : Error("alignment losses need at least 2 pairs, got " + std::to_string(b)) {}

nlohmann::json LossBreakdown::to_json() const {
  return {{"l_contrast", l_contrast.item()}, {"l_match", l_match.item()}, {"l_caption", l_caption.item()},
          {"l_align", l_align.item()},       {"l_spr", l_spr.item()},     {"l_total", l_total.item()},
          {"keep_rate", keep_rate}};
}

Tensor gqg_queries(const Tensor& patch_feats, const Tensor& learned_queries, const Linear& proj) {
  if (patch_feats.dim() != 2 || learned_queries.dim() != 2 || patch_feats.cols() != learned_queries.cols()) {
    throw ShapeMismatch("gqg_queries", patch_feats.shape(), learned_queries.shape());
  }
  const Tensor context = mean_pool(attention(learned_queries, patch_feats, patch_feats), 0);
  return add(learned_queries, proj(reshape(context, {1, context.numel()})));
}

std::pair<Tensor, Tensor> sgs_update_mask(const Tensor& prev_mask, const Tensor& patch_feats, const Linear& head,
                                          double tau, bool hard, Rng& rng) {
  const std::size_t n = patch_feats.rows();
  if (prev_mask.dim() != 1 || prev_mask.numel() != n) {
    throw ShapeMismatch("sgs_update_mask", prev_mask.shape(), patch_feats.shape());
  }
  const Tensor logits = head(patch_feats);
  const Tensor sample = gumbel_softmax(logits, tau, hard, rng);
  const Tensor keep = reshape(slice_cols(sample, 0, 1), {n});
  Tensor probs;
  {
    NoGradGuard ng;
    probs = reshape(slice_cols(softmax(logits, 1), 0, 1), {n});
  }
  return {mul(prev_mask, keep), probs};
}

Tensor sparsification_loss(const SGSState& state) {
  if (state.masks.empty() || state.patches() == 0) throw ShapeMismatch("sparsification_loss: empty SGS state");
  const double kn = static_cast<double>(state.stages() * state.patches());
  return scale(sum(abs(concat(state.masks, 0))), 1.0 / kn);
}

Tensor info_nce(const Tensor& img, const Tensor& txt, const Tensor& log_scale) {
  if (img.shape() != txt.shape()) throw ShapeMismatch("info_nce", img.shape(), txt.shape());
  const std::size_t b = img.rows();
  if (b < 2) throw BatchTooSmall(b);
  const Tensor sim = mul(matmul(l2_normalize_rows(img), transpose(l2_normalize_rows(txt))), exp(log_scale));
  std::vector<TokenId> diag(b);
  std::iota(diag.begin(), diag.end(), 0);
  return scale(add(cross_entropy(sim, diag), cross_entropy(transpose(sim), diag)), 0.5);
}

GSFormer::GSFormer(GSFormerConfig cfg, ParamStore& ps, Rng& init) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.vocab_size == 0) throw ConfigError("gsformer config: vocab_size must be set");
  const std::size_t d = cfg_.d;
  const double sd = cfg_.init_std;
  learned_queries_ = ps.normal("gsf.queries", {cfg_.n_queries, d}, init, sd);
  gqg_proj_ = Linear::create(ps, "gsf.gqg", d, d, init, sd);
  patch_in_ = Linear::create(ps, "gsf.patch_in", cfg_.d_in, d, init, sd);
  patch_ln_ = LayerNorm::create(ps, "gsf.patch_ln", d);
  tok_emb_ = ps.normal("gsf.tok_emb", {cfg_.vocab_size, d}, init, sd);
  text_pos_ = ps.normal("gsf.text_pos", {cfg_.max_text_len, d}, init, sd);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "gsf.layer" + std::to_string(l);
    Layer layer;
    layer.ln_self = LayerNorm::create(ps, p + ".ln_self", d);
    layer.self_attn = MultiHeadAttention::create(ps, p + ".self", d, cfg_.n_heads, init, sd);
    layer.ln_cross = LayerNorm::create(ps, p + ".ln_cross", d);
    layer.cross_attn = MultiHeadAttention::create(ps, p + ".cross", d, cfg_.n_heads, init, sd);
    layer.ln_ffn = LayerNorm::create(ps, p + ".ln_ffn", d);
    layer.ffn = FeedForward::create(ps, p + ".ffn", d, cfg_.ffn_hidden, init, sd);
    layers_.push_back(std::move(layer));
  }
  for (auto l : cfg_.sgs_layers) {
    auto head = Linear::create(ps, "gsf.sgs" + std::to_string(l), d, 2, init, sd);
    head.b.mutable_data()[0] = cfg_.sgs_keep_bias;
    sgs_heads_.push_back(head);
  }
  final_ln_ = LayerNorm::create(ps, "gsf.final_ln", d);
  itc_img_ = Linear::create(ps, "gsf.itc_img", d, d, init, sd);
  itc_txt_ = Linear::create(ps, "gsf.itc_txt", d, d, init, sd);
  logit_scale_ = ps.add("gsf.logit_scale", Tensor::scalar(std::log(1.0 / 0.07)));
  itm_hidden_ = Linear::create(ps, "gsf.itm_hidden", 2 * d, d, init, sd);
  itm_out_ = Linear::create(ps, "gsf.itm_out", d, 2, init, sd);
}

Tensor GSFormer::embed_patches(const Tensor& patches) const {
  if (patches.dim() != 2 || patches.cols() != cfg_.d_in) {
    throw ShapeMismatch("gs_former patches", patches.shape(), Shape{0, cfg_.d_in});
  }
  return patch_ln_(patch_in_(patches));
}

Tensor GSFormer::queries(const Tensor& patch_feats) const { return gqg_queries(patch_feats, learned_queries_, gqg_proj_); }

std::vector<TokenId> GSFormer::text_input(std::span<const TokenId> caption) const {
  const std::size_t n = std::min(caption.size(), cfg_.max_text_len - 1);
  std::vector<TokenId> ids{lang::Vocab::kBos};
  ids.insert(ids.end(), caption.begin(), caption.begin() + static_cast<std::ptrdiff_t>(n));
  for (TokenId t : ids) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size) throw lang::OutOfVocab("#" + std::to_string(t));
  }
  return ids;
}

Tensor GSFormer::embed_text(std::span<const TokenId> ids) const {
  return add(embedding_lookup(tok_emb_, ids), slice_rows(text_pos_, 0, ids.size()));
}

Tensor GSFormer::run_layers(Tensor x, std::size_t nq, std::span<const std::uint8_t> allow, const Tensor& feats,
                            const Rng& rng, bool hard, double tau, SGSState* state,
                            std::size_t* masked_rows) const {
  Tensor mask;
  if (nq > 0) {
    mask = Tensor::full({feats.rows()}, 1.0);
    if (state) state->masks.push_back(mask);
  }
  AttentionStats stats;
  std::size_t sgs_index = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const Tensor h = layer.ln_self(x);
    x = add(x, layer.self_attn(h, h, Tensor(), allow));
    if (nq > 0) {
      if (cfg_.sgs_layers.contains(l)) {
        Rng stage_rng = rng.split("sgs").split(static_cast<std::uint64_t>(l));
        auto [next, probs] = sgs_update_mask(mask, feats, sgs_heads_[sgs_index++], tau, hard, stage_rng);
        mask = next;
        if (state) {
          state->masks.push_back(mask);
          state->probs.push_back(probs);
        }
      }
      Tensor q = slice_rows(x, 0, nq);
      q = add(q, layer.cross_attn(layer.ln_cross(q), feats, mask, {}, &stats));
      x = x.rows() > nq ? concat({q, slice_rows(x, nq, x.rows())}, 0) : q;
    }
    x = add(x, layer.ffn(layer.ln_ffn(x)));
  }
  if (masked_rows) *masked_rows += stats.all_masked_rows;
  return final_ln_(x);
}

ForwardResult GSFormer::forward(const Tensor& patches, std::span<const TokenId> caption, const Rng& rng,
                                bool hard) const {
  return forward_at(patches, caption, rng, hard, cfg_.tau);
}

ForwardResult GSFormer::forward_at(const Tensor& patches, std::span<const TokenId> caption, const Rng& rng, bool hard,
                                   double tau) const {
  ForwardResult out;
  const std::vector<TokenId> ids = text_input(caption);
  const std::size_t nq = cfg_.n_queries;
  const std::size_t nt = ids.size();
  const std::size_t n = nq + nt;

  std::vector<std::uint8_t> allow(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool query_key = j < nq;
      allow[i * n + j] = i < nq ? query_key : (query_key || j <= i);
    }
  }

  const Tensor feats = embed_patches(patches);
  const Tensor x = concat({queries(feats), embed_text(ids)}, 0);
  const Tensor y = run_layers(x, nq, allow, feats, rng, hard, tau, &out.state, &out.all_masked_rows);
  out.features.f_g = slice_rows(y, 0, nq);
  out.caption_logits = matmul(slice_rows(y, nq, n), transpose(tok_emb_));
  out.caption_targets.assign(ids.begin() + 1, ids.end());
  out.caption_targets.push_back(lang::Vocab::kEos);
  out.features.text_cls = encode_text(caption);
  return out;
}

Tensor GSFormer::encode_geometry(const Tensor& patches, const Rng& rng, bool hard, SGSState* state) const {
  const Tensor feats = embed_patches(patches);
  return run_layers(queries(feats), cfg_.n_queries, {}, feats, rng, hard, cfg_.tau, state, nullptr);
}

Tensor GSFormer::encode_text(std::span<const TokenId> caption) const {
  const std::vector<TokenId> ids = text_input(caption);
  const Tensor y = run_layers(embed_text(ids), 0, {}, Tensor(), Rng(), false, cfg_.tau, nullptr, nullptr);
  return reshape(slice_rows(y, 0, 1), {cfg_.d});
}

Tensor GSFormer::match_logits(const Tensor& pooled_img, const Tensor& text_cls) const {
  return itm_out_(gelu(itm_hidden_(concat({pooled_img, text_cls}, 1))));
}

std::tuple<Tensor, Tensor, Tensor> GSFormer::alignment_loss(const std::vector<ForwardResult>& batch) const {
  const std::size_t b = batch.size();
  if (b < 2) throw BatchTooSmall(b);
  const std::size_t d = cfg_.d;
  std::vector<Tensor> pooled, texts, logits;
  std::vector<TokenId> targets;
  for (const auto& r : batch) {
    pooled.push_back(reshape(mean_pool(r.features.f_g, 0), {1, d}));
    texts.push_back(reshape(r.features.text_cls, {1, d}));
    logits.push_back(r.caption_logits);
    targets.insert(targets.end(), r.caption_targets.begin(), r.caption_targets.end());
  }
  const Tensor img = concat(pooled, 0);
  const Tensor txt = concat(texts, 0);

  const Tensor l_contrast = info_nce(itc_img_(img), itc_txt_(txt), logit_scale_);

  // Every (diagram i, caption j) pair; diagonal pairs match. Positives and
  // negatives are averaged separately and weighted equally.
  std::vector<TokenId> ii, jj, label;
  std::vector<std::uint8_t> not_pos, not_neg;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      ii.push_back(static_cast<TokenId>(i));
      jj.push_back(static_cast<TokenId>(j));
      label.push_back(i == j ? 1 : 0);
      not_pos.push_back(i == j ? 0 : 1);
      not_neg.push_back(i == j ? 1 : 0);
    }
  }
  const Tensor pair_logits = match_logits(embedding_lookup(img, ii), embedding_lookup(txt, jj));
  const Tensor l_match =
      scale(add(cross_entropy(pair_logits, label, not_pos), cross_entropy(pair_logits, label, not_neg)), 0.5);

  const Tensor l_caption = cross_entropy(concat(logits, 0), targets);
  return {l_contrast, l_match, l_caption};
}

LossBreakdown GSFormer::pretrain_loss(const std::vector<PretrainPair>& batch, const Rng& rng, bool hard,
                                      double tau_override) const {
  if (batch.size() < 2) throw BatchTooSmall(batch.size());
  const double tau = tau_override > 0.0 ? tau_override : cfg_.tau;
  std::vector<ForwardResult> results;
  results.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    results.push_back(
        forward_at(batch[i].patches, batch[i].caption, rng.split(static_cast<std::uint64_t>(i)), hard, tau));
  }

  LossBreakdown out;
  std::tie(out.l_contrast, out.l_match, out.l_caption) = alignment_loss(results);
  const auto& w = cfg_.align;
  out.l_align = add(add(scale(out.l_contrast, w.contrast), scale(out.l_match, w.match)),
                    scale(out.l_caption, w.caption));

  std::vector<Tensor> spr;
  out.keep_rate.assign(cfg_.stages(), 0.0);
  for (const auto& r : results) {
    spr.push_back(reshape(sparsification_loss(r.state), {1}));
    for (std::size_t s = 0; s < r.state.stages(); ++s) {
      double m = 0.0;
      for (double v : r.state.masks[s].data()) m += v;
      out.keep_rate[s] += m / static_cast<double>(r.state.patches()) / static_cast<double>(results.size());
    }
  }
  out.l_spr = mean(concat(spr, 0));
  out.l_total = add(out.l_align, scale(out.l_spr, cfg_.lambda));
  return out;
}

}  // namespace geoformal::gsformer
