#include "geoformal/tensor/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace geoformal::tensor {

namespace {

using detail::make_result;
using detail::Node;

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

// Gradient buffer of parent i, or null when it takes no gradient.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

struct View2 {
  std::size_t r = 1;
  std::size_t c = 1;
};

View2 view2(const Shape& s, const std::string& op) {
  switch (s.size()) {
    case 0:
      return {};
    case 1:
      return {1, s[0]};
    case 2:
      return {s[0], s[1]};
    default:
      throw ShapeMismatch(op + ": rank " + std::to_string(s.size()) + " is not supported");
  }
}

void require_rank(const Tensor& t, std::size_t rank, const std::string& op) {
  if (t.dim() != rank) {
    throw ShapeMismatch(op + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

enum class BinOp { Add, Sub, Mul, Div };

Tensor binary(const Tensor& a, const Tensor& b, BinOp kind, const char* name) {
  const View2 va = view2(a.shape(), name);
  const View2 vb = view2(b.shape(), name);
  auto bdim = [&](std::size_t x, std::size_t y) {
    if (x != y && x != 1 && y != 1) throw ShapeMismatch(name, a.shape(), b.shape());
    return std::max(x, y);
  };
  const std::size_t R = bdim(va.r, vb.r);
  const std::size_t C = bdim(va.c, vb.c);
  Shape out_shape;
  const std::size_t rank = std::max(a.dim(), b.dim());
  if (rank == 2) {
    out_shape = {R, C};
  } else if (rank == 1) {
    out_shape = {C};
  }

  auto ia = [va](std::size_t i, std::size_t j) {
    return (va.r == 1 ? 0 : i) * va.c + (va.c == 1 ? 0 : j);
  };
  auto ib = [vb](std::size_t i, std::size_t j) {
    return (vb.r == 1 ? 0 : i) * vb.c + (vb.c == 1 ? 0 : j);
  };

  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const double x = A[ia(i, j)];
      const double y = B[ib(i, j)];
      double z = 0.0;
      switch (kind) {
        case BinOp::Add: z = x + y; break;
        case BinOp::Sub: z = x - y; break;
        case BinOp::Mul: z = x * y; break;
        case BinOp::Div: z = x / y; break;
      }
      out[i * C + j] = z;
    }
  }

  return make_result(out_shape, std::move(out), {a, b},
                     [R, C, ia, ib, kind](Node& self) {
                       const auto& g = self.grad;
                       const auto& A = self.parents[0]->value;
                       const auto& B = self.parents[1]->value;
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < R; ++i) {
                         for (std::size_t j = 0; j < C; ++j) {
                           const double gij = g[i * C + j];
                           const std::size_t pa = ia(i, j);
                           const std::size_t pb = ib(i, j);
                           switch (kind) {
                             case BinOp::Add:
                               if (ga) (*ga)[pa] += gij;
                               if (gb) (*gb)[pb] += gij;
                               break;
                             case BinOp::Sub:
                               if (ga) (*ga)[pa] += gij;
                               if (gb) (*gb)[pb] -= gij;
                               break;
                             case BinOp::Mul:
                               if (ga) (*ga)[pa] += gij * B[pb];
                               if (gb) (*gb)[pb] += gij * A[pa];
                               break;
                             case BinOp::Div:
                               if (ga) (*ga)[pa] += gij / B[pb];
                               if (gb) (*gb)[pb] -= gij * A[pa] / (B[pb] * B[pb]);
                               break;
                           }
                         }
                       }
                     });
}

// y = f(x), dy/dx = df(x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  return make_result(a.shape(), std::move(out), {a}, [df](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

}  // namespace

NonPositiveTemperature::NonPositiveTemperature(double tau)
    : Error("gumbel_softmax: temperature must be positive, got " + std::to_string(tau)) {}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Div, "div"); }

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) throw ShapeMismatch("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  const auto im = static_cast<Eigen::Index>(m);
  const auto ik = static_cast<Eigen::Index>(k);
  const auto in = static_cast<Eigen::Index>(n);
  MutMap(out.data(), im, in).noalias() =
      ConstMap(a.data().data(), im, ik) * ConstMap(b.data().data(), ik, in);
  return make_result({m, n}, std::move(out), {a, b}, [im, ik, in](Node& self) {
    ConstMap G(self.grad.data(), im, in);
    if (auto* ga = grad_of(self, 0)) {
      MutMap(ga->data(), im, ik).noalias() +=
          G * ConstMap(self.parents[1]->value.data(), ik, in).transpose();
    }
    if (auto* gb = grad_of(self, 1)) {
      MutMap(gb->data(), ik, in).noalias() +=
          ConstMap(self.parents[0]->value.data(), im, ik).transpose() * G;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  const auto A = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = A[i * c + j];
  }
  return make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) throw ShapeMismatch("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  const std::size_t rank = parts[0].dim();
  if (rank == 1) {
    if (axis != 0) throw ShapeMismatch("concat: axis out of range for rank 1");
    std::vector<double> out;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
      require_rank(p, 1, "concat");
      offsets.push_back(out.size());
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    const std::size_t total = out.size();
    return make_result({total}, std::move(out), parts, [offsets](Node& self) {
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        auto* gk = grad_of(self, k);
        if (!gk) continue;
        for (std::size_t i = 0; i < gk->size(); ++i) (*gk)[i] += self.grad[offsets[k] + i];
      }
    });
  }
  require_rank(parts[0], 2, "concat");
  if (axis > 1) throw ShapeMismatch("concat: axis out of range for rank 2");
  const std::size_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat");
    const std::size_t other = axis == 0 ? p.cols() : p.rows();
    if (other != fixed) throw ShapeMismatch("concat", parts[0].shape(), p.shape());
    offsets.push_back(total);
    total += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t R = axis == 0 ? total : fixed;
  const std::size_t C = axis == 0 ? fixed : total;
  std::vector<double> out(R * C);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    const auto P = p.data();
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const std::size_t oi = axis == 0 ? offsets[k] + i : i;
        const std::size_t oj = axis == 0 ? j : offsets[k] + j;
        out[oi * C + oj] = P[i * p.cols() + j];
      }
    }
  }
  return make_result({R, C}, std::move(out), parts, [offsets, axis, C](Node& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      auto* gk = grad_of(self, k);
      if (!gk) continue;
      const auto& ps = self.parents[k]->shape;
      for (std::size_t i = 0; i < ps[0]; ++i) {
        for (std::size_t j = 0; j < ps[1]; ++j) {
          const std::size_t oi = axis == 0 ? offsets[k] + i : i;
          const std::size_t oj = axis == 0 ? j : offsets[k] + j;
          (*gk)[i * ps[1] + j] += self.grad[oi * C + oj];
        }
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.dim() || a.dim() > 2) {
    throw ShapeMismatch("slice: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  }
  if (begin > end || end > a.shape()[axis]) {
    throw ShapeMismatch("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") outside " + shape_str(a.shape()));
  }
  const View2 v = view2(a.shape(), "slice");
  // Treat rank 1 as a single row sliced along columns.
  const bool rows = a.dim() == 2 && axis == 0;
  const std::size_t R = rows ? end - begin : v.r;
  const std::size_t C = rows ? v.c : end - begin;
  const std::size_t r0 = rows ? begin : 0;
  const std::size_t c0 = rows ? 0 : begin;
  const auto A = a.data();
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] = A[(i + r0) * v.c + j + c0];
  }
  Shape shape = a.dim() == 2 ? Shape{R, C} : Shape{C};
  return make_result(std::move(shape), std::move(out), {a}, [R, C, r0, c0, v](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) (*ga)[(i + r0) * v.c + j + c0] += self.grad[i * C + j];
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) { return slice(a, 0, begin, end); }
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) { return slice(a, 1, begin, end); }

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_result({}, {s}, {a}, [](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (auto& g : *ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeMismatch("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_rank(a, 2, "sum");
  if (axis > 1) throw ShapeMismatch("sum: axis out of range");
  const std::size_t R = a.rows();
  const std::size_t C = a.cols();
  const auto A = a.data();
  std::vector<double> out(axis == 0 ? C : R, 0.0);
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) out[axis == 0 ? j : i] += A[i * C + j];
  }
  const std::size_t n = out.size();
  return make_result({n}, std::move(out), {a}, [R, C, axis](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < R; ++i) {
      for (std::size_t j = 0; j < C; ++j) (*ga)[i * C + j] += self.grad[axis == 0 ? j : i];
    }
  });
}

Tensor mean_pool(const Tensor& a, std::size_t axis) {
  require_rank(a, 2, "mean_pool");
  const std::size_t extent = a.shape()[axis > 1 ? 1 : axis];
  if (extent == 0) throw ShapeMismatch("mean_pool over an empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(extent));
}

namespace {

// Row-wise (log-)softmax on a 2-D view; axis 0 is handled by transposing.
Tensor softmax_rows(const Tensor& a, bool log_space) {
  const View2 v = view2(a.shape(), "softmax");
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < v.r; ++i) {
    const double* x = A.data() + i * v.c;
    double* y = out.data() + i * v.c;
    const double m = *std::max_element(x, x + v.c);
    double z = 0.0;
    for (std::size_t j = 0; j < v.c; ++j) z += std::exp(x[j] - m);
    const double lz = std::log(z);
    for (std::size_t j = 0; j < v.c; ++j) {
      y[j] = log_space ? x[j] - m - lz : std::exp(x[j] - m - lz);
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [v, log_space](Node& self) {
    auto* ga = grad_of(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < v.r; ++i) {
      const double* y = self.value.data() + i * v.c;
      const double* g = self.grad.data() + i * v.c;
      double* d = ga->data() + i * v.c;
      if (log_space) {
        double gs = 0.0;
        for (std::size_t j = 0; j < v.c; ++j) gs += g[j];
        for (std::size_t j = 0; j < v.c; ++j) d[j] += g[j] - std::exp(y[j]) * gs;
      } else {
        double dot = 0.0;
        for (std::size_t j = 0; j < v.c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < v.c; ++j) d[j] += y[j] * (g[j] - dot);
      }
    }
  });
}

Tensor softmax_axis(const Tensor& a, std::size_t axis, bool log_space) {
  if (a.dim() == 0 || a.dim() > 2 || axis >= a.dim() + (a.dim() == 1 ? 1 : 0)) {
    throw ShapeMismatch("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  }
  if (a.dim() == 2 && axis == 0) return transpose(softmax_rows(transpose(a), log_space));
  return softmax_rows(a, log_space);
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) { return softmax_axis(a, axis, false); }
Tensor log_softmax(const Tensor& a, std::size_t axis) { return softmax_axis(a, axis, true); }

Tensor masked_softmax(const Tensor& scores, const Tensor& key_mask, std::span<const std::uint8_t> allow,
                      std::size_t* all_masked_rows) {
  require_rank(scores, 2, "masked_softmax");
  const std::size_t q = scores.rows();
  const std::size_t n = scores.cols();
  if (key_mask.defined() && (key_mask.dim() != 1 || key_mask.numel() != n)) {
    throw ShapeMismatch("masked_softmax key_mask", scores.shape(), key_mask.shape());
  }
  if (!allow.empty() && allow.size() != q * n) {
    throw ShapeMismatch("masked_softmax: allow pattern has " + std::to_string(allow.size()) +
                        " entries for " + shape_str(scores.shape()));
  }
  std::vector<double> m(q * n, 1.0);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double v = 1.0;
      if (!allow.empty() && allow[i * n + j] == 0) v = 0.0;
      if (key_mask.defined()) v *= key_mask[j];
      m[i * n + j] = v;
    }
  }

  // e_ij is kept for every key (masked ones too) because a soft mask's
  // gradient needs it; exponents are capped so hard-masked keys stay finite.
  const auto S = scores.data();
  std::vector<double> e(q * n, 0.0);
  std::vector<double> Z(q, 0.0);
  std::vector<double> out(q * n, 0.0);
  std::size_t empty_rows = 0;
  for (std::size_t i = 0; i < q; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (m[i * n + j] > 0.0) mx = std::max(mx, S[i * n + j]);
    }
    if (!std::isfinite(mx)) {
      ++empty_rows;
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double ej = std::exp(std::min(S[i * n + j] - mx, 60.0));
      e[i * n + j] = ej;
      z += m[i * n + j] * ej;
    }
    if (!(z > 0.0)) {
      ++empty_rows;
      continue;
    }
    Z[i] = z;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = m[i * n + j] * e[i * n + j] / z;
  }
  if (all_masked_rows != nullptr) *all_masked_rows += empty_rows;

  std::vector<std::uint8_t> allow_copy(allow.begin(), allow.end());
  return make_result(
      {q, n}, std::move(out), {scores, key_mask},
      [q, n, e = std::move(e), Z = std::move(Z), allow_copy = std::move(allow_copy)](Node& self) {
        auto* gs = grad_of(self, 0);
        auto* gm = self.parents.size() > 1 ? grad_of(self, 1) : nullptr;
        const auto& w = self.value;
        const auto& g = self.grad;
        for (std::size_t i = 0; i < q; ++i) {
          if (Z[i] == 0.0) continue;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * w[i * n + j];
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t k = i * n + j;
            if (gs) (*gs)[k] += w[k] * (g[k] - dot);
            if (gm && (allow_copy.empty() || allow_copy[k] != 0)) {
              (*gm)[j] += e[k] / Z[i] * (g[k] - dot);
            }
          }
        }
      });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask,
                 std::span<const std::uint8_t> allow, AttentionStats* stats) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  if (q.cols() != k.cols()) throw ShapeMismatch("attention q/k", q.shape(), k.shape());
  if (k.rows() != v.rows()) throw ShapeMismatch("attention k/v", k.shape(), v.shape());
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  const Tensor scores = scale(matmul(q, transpose(k)), inv);
  std::size_t empty = 0;
  const Tensor w = masked_softmax(scores, key_mask, allow, &empty);
  if (stats != nullptr) stats->all_masked_rows += empty;
  return matmul(w, v);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t R = x.rows();
  const std::size_t C = x.cols();
  if (gamma.numel() != C || beta.numel() != C) throw ShapeMismatch("layer_norm", x.shape(), gamma.shape());
  const auto X = x.data();
  std::vector<double> xhat(R * C);
  std::vector<double> inv_std(R);
  std::vector<double> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < C; ++j) mu += X[i * C + j];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t j = 0; j < C; ++j) var += (X[i * C + j] - mu) * (X[i * C + j] - mu);
    var /= static_cast<double>(C);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < C; ++j) {
      xhat[i * C + j] = (X[i * C + j] - mu) * inv_std[i];
      out[i * C + j] = xhat[i * C + j] * gamma[j] + beta[j];
    }
  }
  return make_result(
      {R, C}, std::move(out), {x, gamma, beta},
      [R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        auto* gx = grad_of(self, 0);
        auto* gg = grad_of(self, 1);
        auto* gb = grad_of(self, 2);
        const auto& gamma = self.parents[1]->value;
        const auto& g = self.grad;
        std::vector<double> dxhat(C);
        for (std::size_t i = 0; i < R; ++i) {
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t j = 0; j < C; ++j) {
            const std::size_t k = i * C + j;
            if (gg) (*gg)[j] += g[k] * xhat[k];
            if (gb) (*gb)[j] += g[k];
            dxhat[j] = g[k] * gamma[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[k];
          }
          if (!gx) continue;
          mean_d /= static_cast<double>(C);
          mean_dx /= static_cast<double>(C);
          for (std::size_t j = 0; j < C; ++j) {
            const std::size_t k = i * C + j;
            (*gx)[k] += inv_std[i] * (dxhat[j] - mean_d - xhat[k] * mean_dx);
          }
        }
      });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const View2 v = view2(x.shape(), "l2_normalize_rows");
  const auto X = x.data();
  std::vector<double> norm(v.r);
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < v.r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < v.c; ++j) ss += X[i * v.c + j] * X[i * v.c + j];
    norm[i] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < v.c; ++j) out[i * v.c + j] = X[i * v.c + j] / norm[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [v, norm = std::move(norm)](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < v.r; ++i) {
      const double* y = self.value.data() + i * v.c;
      const double* g = self.grad.data() + i * v.c;
      double dot = 0.0;
      for (std::size_t j = 0; j < v.c; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < v.c; ++j) (*gx)[i * v.c + j] += (g[j] - y[j] * dot) / norm[i];
    }
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids) {
  require_rank(table, 2, "embedding_lookup");
  const std::size_t V = table.rows();
  const std::size_t d = table.cols();
  const auto T = table.data();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw ShapeMismatch("embedding_lookup: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(V) + " rows");
    }
    std::copy_n(T.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table}, [d, idx = std::move(idx)](Node& self) {
    auto* gt = grad_of(self, 0);
    if (!gt) return;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) (*gt)[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return b.defined() ? add(matmul(x, w), b) : matmul(x, w);
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::span<const std::uint8_t> ignore, Reduction reduction) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t L = logits.rows();
  const std::size_t V = logits.cols();
  if (targets.size() != L) {
    throw ShapeMismatch("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(L) + " rows");
  }
  if (!ignore.empty() && ignore.size() != L) {
    throw ShapeMismatch("cross_entropy: ignore mask has " + std::to_string(ignore.size()) + " entries");
  }
  std::vector<std::uint8_t> active(L, 1);
  std::size_t count = 0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!ignore.empty() && ignore[i] != 0) {
      active[i] = 0;
      continue;
    }
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= V) {
      throw ShapeMismatch("cross_entropy: target " + std::to_string(targets[i]) + " outside " +
                          std::to_string(V) + " classes");
    }
    ++count;
  }
  if (count == 0) throw EmptyAfterMask();

  const auto X = logits.data();
  std::vector<double> probs(L * V, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!active[i]) continue;
    const double* x = X.data() + i * V;
    const double m = *std::max_element(x, x + V);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) z += std::exp(x[j] - m);
    const double lz = m + std::log(z);
    loss += lz - x[targets[i]];
    for (std::size_t j = 0; j < V; ++j) probs[i * V + j] = std::exp(x[j] - lz);
  }
  const double factor = reduction == Reduction::Mean ? 1.0 / static_cast<double>(count) : 1.0;
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return make_result(
      {}, {loss * factor}, {logits},
      [L, V, factor, probs = std::move(probs), tg = std::move(tg), active = std::move(active)](Node& self) {
        auto* gl = grad_of(self, 0);
        if (!gl) return;
        const double g = self.grad[0] * factor;
        for (std::size_t i = 0; i < L; ++i) {
          if (!active[i]) continue;
          for (std::size_t j = 0; j < V; ++j) (*gl)[i * V + j] += g * probs[i * V + j];
          (*gl)[i * V + static_cast<std::size_t>(tg[i])] -= g;
        }
      });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("mse_loss", a.shape(), b.shape());
  return mean(square(sub(a, b)));
}

Tensor gumbel_noise(const Shape& shape, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (auto& g : v) {
    const double u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    g = -std::log(-std::log(u));
  }
  return Tensor(shape, std::move(v));
}

Tensor straight_through(const Tensor& hard, const Tensor& soft) {
  if (hard.shape() != soft.shape()) throw ShapeMismatch("straight_through", hard.shape(), soft.shape());
  std::vector<double> out(hard.data().begin(), hard.data().end());
  return make_result(hard.shape(), std::move(out), {soft}, [](Node& self) {
    auto* gs = grad_of(self, 0);
    if (!gs) return;
    for (std::size_t i = 0; i < gs->size(); ++i) (*gs)[i] += self.grad[i];
  });
}

Tensor gumbel_softmax_with_noise(const Tensor& logits, const Tensor& noise, double tau, bool hard) {
  if (!(tau > 0.0)) throw NonPositiveTemperature(tau);
  if (logits.shape() != noise.shape()) throw ShapeMismatch("gumbel_softmax", logits.shape(), noise.shape());
  const Tensor soft = softmax(scale(add(logits, noise), 1.0 / tau), logits.dim() == 2 ? 1 : 0);
  if (!hard) return soft;
  const View2 v = view2(soft.shape(), "gumbel_softmax");
  std::vector<double> onehot(soft.numel(), 0.0);
  const auto S = soft.data();
  for (std::size_t i = 0; i < v.r; ++i) {
    const auto row = S.subspan(i * v.c, v.c);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    onehot[i * v.c + best] = 1.0;
  }
  return straight_through(Tensor(soft.shape(), std::move(onehot)), soft);
}

Tensor gumbel_softmax(const Tensor& logits, double tau, bool hard, Rng& rng) {
  if (!(tau > 0.0)) throw NonPositiveTemperature(tau);
  return gumbel_softmax_with_noise(logits, gumbel_noise(logits.shape(), rng), tau, hard);
}

}  // namespace geoformal::tensor
