#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geoformal/tensor/tensor.hpp"

namespace geoformal::tensor {

class NonPositiveTemperature : public Error {
 public:
  explicit NonPositiveTemperature(double tau);
};

/// Every target position was ignored.
class EmptyAfterMask : public Error {
 public:
  EmptyAfterMask() : Error("cross_entropy: every position is ignored") {}
};

// Elementwise binary ops broadcast over tensors of rank <= 2: extents must
// match or be 1 (a rank-1 tensor acts as a single row).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
/// Exact (erf) GELU.
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// (m, k) x (k, n) -> (m, n).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns), or
/// rank-1 tensors end to end.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums a rank-2 tensor along `axis`; the result drops that axis.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean_pool(const Tensor& a, std::size_t axis);

/// Softmax along `axis` of a rank-1 or rank-2 tensor.
Tensor softmax(const Tensor& a, std::size_t axis = 1);
Tensor log_softmax(const Tensor& a, std::size_t axis = 1);

/// Row-wise softmax over keys weighted by a key mask:
///   w_ij = m_ij exp(s_ij) / sum_k m_ik exp(s_ik),  m_ij = allow_ij * key_mask_j.
/// `key_mask` (n) may be soft and receives gradient; `allow` (q*n, row-major,
/// 0/1) is a fixed pattern such as a causal mask. Either may be empty. A row
/// whose weights are all zero yields zeros and is counted in `all_masked_rows`.
Tensor masked_softmax(const Tensor& scores, const Tensor& key_mask,
                      std::span<const std::uint8_t> allow = {},
                      std::size_t* all_masked_rows = nullptr);

struct AttentionStats {
  std::size_t all_masked_rows = 0;
};

/// softmax(Q K^T / sqrt(d)) V with masked keys excluded. Q (q, d), K (n, d),
/// V (n, dv), key_mask (n) or undefined. A query whose keys are all masked
/// gets a zero output row, recorded in `stats`; this is not an error.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const Tensor& key_mask = Tensor(), std::span<const std::uint8_t> allow = {},
                 AttentionStats* stats = nullptr);

/// Per-row normalization of a rank-2 tensor with gain and bias of shape (n).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// x / sqrt(sum(x^2) + eps), row by row.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

/// Rows of `table` (V, d) selected by `ids`; repeated ids accumulate gradient.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids);

/// x W + b with b of shape (n).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

enum class Reduction { Mean, Sum };

/// -log softmax(logits)[target] over rows of (L, V) logits. Positions with a
/// nonzero `ignore` flag contribute nothing. Throws EmptyAfterMask.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> ignore = {},
                     Reduction reduction = Reduction::Mean);

/// Mean squared difference over all elements.
Tensor mse_loss(const Tensor& a, const Tensor& b);

/// g = -log(-log u), u clamped to [1e-12, 1 - 1e-12].
Tensor gumbel_noise(const Shape& shape, Rng& rng);

/// Row-wise softmax((logits + noise) / tau). In hard mode the forward value
/// is the one-hot argmax and the backward pass uses the soft sample's
/// gradient (straight-through).
Tensor gumbel_softmax_with_noise(const Tensor& logits, const Tensor& noise, double tau,
                                 bool hard);
Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, Rng& rng);

/// Forward value of `hard`, gradient routed to `soft`.
Tensor straight_through(const Tensor& hard, const Tensor& soft);

}  // namespace geoformal::tensor
