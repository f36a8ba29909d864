#include "geoformal/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace geoformal::tensor {

std::vector<double> finite_diff_grad(const ScalarFn& f, Tensor& x, double h) {
  NoGradGuard no_grad;
  auto values = x.mutable_data();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f().item();
    values[i] = saved - h;
    const double down = f().item();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double max_gradient_error(const ScalarFn& f, std::vector<Tensor> leaves, double h) {
  for (auto& t : leaves) t.zero_grad();
  f().backward();
  double worst = 0.0;
  for (auto& t : leaves) {
    const auto analytic = t.grad();
    const auto numeric = finite_diff_grad(f, t, h);
    worst = std::max(worst, relative_error(analytic, numeric));
    t.zero_grad();
  }
  return worst;
}

double directional_gradient_error(const ScalarFn& f, std::vector<Tensor> leaves, Rng& rng, double h) {
  for (auto& t : leaves) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> dirs;
  double analytic = 0.0;
  for (auto& t : leaves) {
    const auto g = t.grad();
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      d[i] = rng.normal();
      analytic += g[i] * d[i];
    }
    dirs.push_back(std::move(d));
    t.zero_grad();
  }

  NoGradGuard no_grad;
  auto shift = [&](double s) {
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      auto v = leaves[k].mutable_data();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * dirs[k][i];
    }
  };
  std::vector<std::vector<double>> saved;
  for (auto& t : leaves) saved.emplace_back(t.data().begin(), t.data().end());
  auto restore = [&] {
    for (std::size_t k = 0; k < leaves.size(); ++k) std::ranges::copy(saved[k], leaves[k].mutable_data().begin());
  };
  shift(h);
  const double up = f().item();
  restore();
  shift(-h);
  const double down = f().item();
  restore();
  const double numeric = (up - down) / (2.0 * h);
  const double a[] = {analytic};
  const double b[] = {numeric};
  return relative_error(a, b);
}

}  // namespace geoformal::tensor
