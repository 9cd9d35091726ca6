#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "simpli/tensor.hpp"

namespace simpli {

/// Central-difference gradient of a scalar function, element by element.
/// `f` runs with recording disabled and must be deterministic.
template <std::floating_point T>
Tensor<T> finite_diff_gradient(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x, double eps) {
    NoGradScope<T> no_grad;
    Tensor<T> probe = x.clone();
    Tensor<T> grad(x.shape());
    for (std::size_t i = 0; i < probe.numel(); ++i) {
        const T orig = probe[i];
        probe[i] = static_cast<T>(orig + eps);
        const double fp = f(probe).item();
        probe[i] = static_cast<T>(orig - eps);
        const double fm = f(probe).item();
        probe[i] = orig;
        grad[i] = static_cast<T>((fp - fm) / (2.0 * eps));
    }
    return grad;
}

/// Analytic gradient of `f` at `x` through the tape.
template <std::floating_point T>
Tensor<T> tape_gradient(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Tensor<T>& x) {
    Tensor<T> leaf = x.clone();
    leaf.set_requires_grad(true);
    Tape<T> tape;
    Tensor<T> y = f(leaf);
    tape.backward(y);
    return leaf.grad_tensor();
}

/// max_i |a_i - b_i| / max(|b_i|, floor); the floor keeps near-zero entries from dominating.
template <std::floating_point T>
double max_relative_error(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::abs(static_cast<double>(b[i])), std::abs(static_cast<double>(a[i])), floor});
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])) / denom);
    }
    return worst;
}

}  // namespace simpli
