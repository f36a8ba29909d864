#include "geoformal/pretrain/instruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geoformal::pretrain {

using namespace tensor;

Tensor project_visual(const Tensor& f_g, const Linear& w) {
  if (f_g.dim() != 2 || f_g.cols() != w.w.rows()) throw ShapeMismatch("project_visual", f_g.shape(), w.w.shape());
  return w(f_g);
}

std::vector<TokenId> instruction_prefix(std::span<const TokenId> t_p) {
  std::vector<TokenId> ids{lang::Vocab::kBos};
  ids.insert(ids.end(), t_p.begin(), t_p.end());
  ids.push_back(lang::Vocab::kSep);
  return ids;
}

std::size_t prefix_length(const Tensor& t_g, std::span<const TokenId> t_p) {
  return (t_g.defined() ? t_g.rows() : 0) + t_p.size() + 2;
}

Tensor instruction_logits(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                          std::span<const TokenId> s) {
  if (s.empty()) throw EmptyTarget();
  std::vector<TokenId> ids = instruction_prefix(t_p);
  ids.insert(ids.end(), s.begin(), s.end() - 1);
  return decoder.logits(t_g, ids);
}

Tensor instruction_loss_from_logits(const Tensor& logits, std::size_t prefix_len, std::span<const TokenId> s) {
  if (s.empty()) throw EmptyTarget();
  const std::size_t rows = logits.rows();
  if (prefix_len == 0 || rows != prefix_len + s.size() - 1) {
    throw ShapeMismatch("instruction_loss: " + std::to_string(rows) + " logit rows for prefix " +
                        std::to_string(prefix_len) + " and target " + std::to_string(s.size()));
  }
  std::vector<TokenId> targets(rows, 0);
  std::vector<std::uint8_t> ignore(rows, 1);
  for (std::size_t l = 0; l < s.size(); ++l) {
    targets[prefix_len - 1 + l] = s[l];
    ignore[prefix_len - 1 + l] = 0;
  }
  return cross_entropy(logits, targets, ignore, Reduction::Sum);
}

Tensor instruction_loss(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                        std::span<const TokenId> s) {
  return instruction_loss_from_logits(instruction_logits(decoder, t_g, t_p, s), prefix_length(t_g, t_p), s);
}

namespace {

// Cache after the whole prefix, and the log-probabilities for s_1.
std::pair<Decoder::Cache, std::vector<double>> prefill(const Decoder& decoder, const Tensor& t_g,
                                                       std::span<const TokenId> t_p) {
  NoGradGuard ng;
  auto cache = decoder.empty_cache();
  std::vector<double> lp;
  if (t_g.defined()) {
    for (std::size_t r = 0; r < t_g.rows(); ++r) lp = decoder.step(cache, slice_rows(t_g.detach(), r, r + 1));
  }
  for (TokenId id : instruction_prefix(t_p)) lp = decoder.step_token(cache, id);
  return {std::move(cache), std::move(lp)};
}

struct Hyp {
  std::vector<TokenId> ids;
  double logp = 0.0;
  Decoder::Cache cache;
  std::vector<double> next;  // log-probs for the following token
};

double normalized(double logp, std::size_t n) { return n == 0 ? logp : logp / static_cast<double>(n); }

}  // namespace

std::vector<DecodedSequence> beam_decode(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                                         std::size_t beam, std::size_t max_len) {
  if (beam == 0) throw std::invalid_argument("beam must be at least 1");
  auto [cache, lp] = prefill(decoder, t_g, t_p);
  std::vector<Hyp> live;
  live.push_back({{}, 0.0, std::move(cache), std::move(lp)});
  std::vector<DecodedSequence> finished;

  for (std::size_t len = 0; len < max_len && !live.empty() && finished.size() < beam; ++len) {
    struct Expansion {
      std::size_t hyp;
      TokenId token;
      double logp;
    };
    std::vector<Expansion> exp;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto& next = live[h].next;
      for (std::size_t v = 0; v < next.size(); ++v) {
        if (v == static_cast<std::size_t>(lang::Vocab::kPad) || v == static_cast<std::size_t>(lang::Vocab::kBos)) {
          continue;
        }
        exp.push_back({h, static_cast<TokenId>(v), live[h].logp + next[v]});
      }
    }
    // Generation order (hyp, token) breaks ties.
    std::stable_sort(exp.begin(), exp.end(), [](const Expansion& a, const Expansion& b) { return a.logp > b.logp; });
    const std::size_t take = std::min(beam - finished.size(), exp.size());
    std::vector<Hyp> next_live;
    for (std::size_t i = 0; i < take; ++i) {
      const auto& e = exp[i];
      const Hyp& parent = live[e.hyp];
      if (e.token == lang::Vocab::kEos) {
        finished.push_back({parent.ids, e.logp, normalized(e.logp, parent.ids.size() + 1), true});
        continue;
      }
      Hyp child{parent.ids, e.logp, parent.cache, {}};
      child.ids.push_back(e.token);
      if (len + 1 < max_len) child.next = decoder.step_token(child.cache, e.token);
      next_live.push_back(std::move(child));
    }
    live = std::move(next_live);
  }
  for (const auto& h : live) {
    if (finished.size() >= beam) break;
    finished.push_back({h.ids, h.logp, normalized(h.logp, h.ids.size()), false});
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const DecodedSequence& a, const DecodedSequence& b) { return a.score > b.score; });
  if (finished.size() > beam) finished.resize(beam);
  return finished;
}

DecodedSequence greedy_decode(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                              std::size_t max_len) {
  auto [cache, lp] = prefill(decoder, t_g, t_p);
  DecodedSequence out;
  for (std::size_t len = 0; len < max_len; ++len) {
    std::size_t best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < lp.size(); ++v) {
      if (v == static_cast<std::size_t>(lang::Vocab::kPad) || v == static_cast<std::size_t>(lang::Vocab::kBos)) continue;
      if (lp[v] > best_lp) {
        best_lp = lp[v];
        best = v;
      }
    }
    out.logp += best_lp;
    if (static_cast<TokenId>(best) == lang::Vocab::kEos) {
      out.finished = true;
      out.score = normalized(out.logp, out.ids.size() + 1);
      return out;
    }
    out.ids.push_back(static_cast<TokenId>(best));
    if (len + 1 < max_len) lp = decoder.step_token(cache, static_cast<TokenId>(best));
  }
  out.score = normalized(out.logp, out.ids.size());
  return out;
}

}  // namespace geoformal::pretrain
