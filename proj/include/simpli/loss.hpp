#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "simpli/ops.hpp"

namespace simpli {

struct LossWeights {
    double l1 = 1.0;
    double perceptual = 2.0;  ///< weight of the image-gradient proxy
    double tv = 0.1;

    void validate() const {
        if (!(l1 >= 0 && perceptual >= 0 && tv >= 0)) throw std::invalid_argument("loss weights must be non-negative");
    }
};

template <std::floating_point T>
struct LossTerms {
    Tensor<T> total;
    double l1 = 0, perceptual = 0, tv = 0;
    double value() const { return double(total.item()); }
};

/// sum |pred - gt| / (3 N H W) for [N, 3, H, W] batches.
template <std::floating_point T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    if (pred.shape() != gt.shape()) throw ShapeError("l1_loss: shapes differ " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
    return mean(abs(sub(pred, gt)));
}

/// Mean absolute difference of forward differences along `axis`.
template <std::floating_point T>
Tensor<T> gradient_l1(const Tensor<T>& pred, const Tensor<T>& gt, std::size_t axis) {
    const std::size_t n = pred.dim(axis);
    auto d = [&](const Tensor<T>& x) { return sub(slice(x, axis, 1, n), slice(x, axis, 0, n - 1)); };
    return mean(abs(sub(d(pred), d(gt))));
}

/// Stand-in for a feature-space perceptual loss: at scales 1, 1/2 and 1/4
/// (area downsampling), the mean of the horizontal and vertical gradient L1
/// terms; averaged over scales. Requires H and W divisible by 4.
template <std::floating_point T>
Tensor<T> gradient_proxy_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    if (pred.shape() != gt.shape() || pred.rank() != 4) throw ShapeError("gradient_proxy_loss: expected matching [N, C, H, W]");
    if (pred.dim(2) % 4 != 0 || pred.dim(3) % 4 != 0) throw ShapeError("gradient_proxy_loss: H and W must be divisible by 4");
    Tensor<T> total;
    for (std::size_t f : {1u, 2u, 4u}) {
        auto p = f == 1 ? pred : downsample_area(pred, f);
        auto g = f == 1 ? gt : downsample_area(gt, f);
        auto s = add(gradient_l1(p, g, 3), gradient_l1(p, g, 2));
        total = total.defined() ? add(total, s) : s;
    }
    return scale(total, 1.0 / 6.0);
}

/// Per-layer total variation of [L, H, W] depth maps: the mean over all
/// horizontal and vertical absolute neighbour differences of a map, averaged
/// over the L maps.
template <std::floating_point T>
Tensor<T> tv_loss(const Tensor<T>& depth) {
    if (depth.rank() != 3) throw ShapeError("tv_loss: expected [L, H, W]");
    const std::size_t L = depth.dim(0), H = depth.dim(1), W = depth.dim(2);
    if (H < 2 && W < 2) throw ShapeError("tv_loss: map has no neighbours");
    const double pairs = double(H * (W - 1) + (H - 1) * W);
    Tensor<T> s;
    if (W > 1) s = sum(abs(sub(slice(depth, 2, 1, W), slice(depth, 2, 0, W - 1))));
    if (H > 1) {
        auto v = sum(abs(sub(slice(depth, 1, 1, H), slice(depth, 1, 0, H - 1))));
        s = s.defined() ? add(s, v) : v;
    }
    return scale(s, 1.0 / (pairs * double(L)));
}

/// lambda_1 L1 + lambda_perc proxy + lambda_tv TV. Throws NumericError
/// naming each component when any of them is not finite.
template <std::floating_point T>
LossTerms<T> loss_total(const Tensor<T>& rendered, const Tensor<T>& truth, const Tensor<T>& layer_depth, const LossWeights& w) {
    w.validate();
    LossTerms<T> out;
    auto l1 = l1_loss(rendered, truth);
    auto perc = gradient_proxy_loss(rendered, truth);
    auto tv = tv_loss(layer_depth);
    out.l1 = double(l1.item());
    out.perceptual = double(perc.item());
    out.tv = double(tv.item());
    if (!std::isfinite(out.l1) || !std::isfinite(out.perceptual) || !std::isfinite(out.tv)) {
        std::ostringstream os;
        os << "loss: non-finite component (l1=" << out.l1 << ", perceptual=" << out.perceptual << ", tv=" << out.tv << ")";
        throw NumericError(os.str());
    }
    out.total = add(add(scale(l1, w.l1), scale(perc, w.perceptual)), scale(tv, w.tv));
    return out;
}

}  // namespace simpli
