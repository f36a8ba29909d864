#pragma once

#include <functional>
#include <span>
#include <vector>

#include "geoformal/tensor/tensor.hpp"

namespace geoformal::tensor {

using ScalarFn = std::function<Tensor()>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of the leaf `x`. `f` must read `x` and be deterministic.
std::vector<double> finite_diff_grad(const ScalarFn& f, Tensor& x, double h = 1e-4);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

/// Largest relative error between backprop and finite differences over the
/// given leaves. Leaf gradients are reset before and after.
double max_gradient_error(const ScalarFn& f, std::vector<Tensor> leaves, double h = 1e-4);

/// Compares backprop and central differences along one random direction
/// through all leaves at once: two evaluations per check instead of two per
/// coordinate, for models too large to probe coordinate by coordinate.
double directional_gradient_error(const ScalarFn& f, std::vector<Tensor> leaves, Rng& rng,
                                  double h = 1e-4);

}  // namespace geoformal::tensor
