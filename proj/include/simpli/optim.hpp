#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "simpli/nn.hpp"

namespace simpli {

/// eta0 * 0.5 * (1 + cos(pi t / T)) for 0 <= t <= T.
inline double cosine_lr(double eta0, std::size_t t, std::size_t T) {
    if (T == 0) throw std::invalid_argument("cosine_lr: T must be positive");
    if (t > T) throw std::out_of_range("cosine_lr: step " + std::to_string(t) + " beyond schedule length " + std::to_string(T));
    return eta0 * 0.5 * (1.0 + std::cos(std::numbers::pi * double(t) / double(T)));
}

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Adam with bias correction; moments kept in double. Parameters without a
/// gradient buffer are treated as having zero gradient.
template <std::floating_point T>
class Adam {
public:
    Adam(nn::ParameterStore<T>& store, AdamConfig cfg = {}) : store_(&store), cfg_(cfg) {
        for (const auto& [_, p] : store.items()) {
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
    }

    /// Applies one update with the schedule value at step t of total.
    void step(std::size_t t, std::size_t total) {
        const double lr = cosine_lr(cfg_.learning_rate, t, total);
        ++count_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(count_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(count_));
        const auto& items = store_->items();
        for (std::size_t k = 0; k < items.size(); ++k) {
            Tensor<T> p = items[k].second;
            const auto g = p.grad();
            auto& m = m_[k];
            auto& v = v_[k];
            T* x = p.data();
            for (std::size_t i = 0; i < m.size(); ++i) {
                const double gi = g.empty() ? 0.0 : double(g[i]);
                m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi;
                v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi;
                x[i] = static_cast<T>(double(x[i]) - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps));
            }
        }
    }

    std::size_t steps_taken() const { return count_; }
    const AdamConfig& config() const { return cfg_; }

private:
    nn::ParameterStore<T>* store_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t count_ = 0;
};

}  // namespace simpli
