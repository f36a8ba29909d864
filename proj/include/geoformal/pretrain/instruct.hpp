#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geoformal/pretrain/decoder.hpp"

namespace geoformal::pretrain {

class EmptyTarget : public DataError {
 public:
  EmptyTarget() : DataError("instruction target is empty") {}
};

/// T_g = F_g W + b, one visual token per query row.
Tensor project_visual(const Tensor& f_g, const tensor::Linear& w);

/// Token ids that follow the visual tokens: BOS, T_p, SEP.
std::vector<TokenId> instruction_prefix(std::span<const TokenId> t_p);

/// Number of prefix positions (visual tokens plus BOS, T_p, SEP).
std::size_t prefix_length(const Tensor& t_g, std::span<const TokenId> t_p);

/// Decoder logits over [T_g; BOS T_p SEP; s_1 .. s_{L-1}]. Row P-1+l
/// predicts s_{l+1}, where P is the prefix length.
Tensor instruction_logits(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                          std::span<const TokenId> s);

/// -sum_l log P(s_l | s_<l, T_g, T_p) from precomputed logits; rows before
/// P-1 carry no loss. Throws EmptyTarget.
Tensor instruction_loss_from_logits(const Tensor& logits, std::size_t prefix_len, std::span<const TokenId> s);

/// Summed target negative log-likelihood. Throws EmptyTarget.
Tensor instruction_loss(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                        std::span<const TokenId> s);

struct DecodedSequence {
  std::vector<TokenId> ids;  // generated tokens, EOS excluded
  double logp = 0.0;         // summed log-probability, EOS included when finished
  double score = 0.0;        // logp / number of scored tokens
  bool finished = false;     // ended with EOS rather than max_len
};

/// Length-normalized beam search. Finished hypotheses are ranked by score,
/// ties keep the order in which they were produced. Hypotheses still open
/// at max_len are ranked along with them. Returns at most `beam` sequences.
std::vector<DecodedSequence> beam_decode(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                                         std::size_t beam = 10, std::size_t max_len = 32);

/// Argmax decoding.
DecodedSequence greedy_decode(const Decoder& decoder, const Tensor& t_g, std::span<const TokenId> t_p,
                              std::size_t max_len = 32);

}  // namespace geoformal::pretrain
