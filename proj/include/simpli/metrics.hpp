#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "simpli/tensor.hpp"

namespace simpli {

inline constexpr double kPsnrCap = 99.0;

struct CropBox {
    std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// Extent after scaling by sqrt(0.9), rounded to the nearest even number.
inline std::size_t crop_extent(std::size_t n) {
    const double scaled = double(n) * std::sqrt(0.9);
    return std::min(n, static_cast<std::size_t>(2.0 * std::round(scaled / 2.0)));
}

/// Central crop keeping ~90% of the image area.
inline CropBox central_crop(std::size_t h, std::size_t w) {
    const std::size_t ch = crop_extent(h), cw = crop_extent(w);
    return {(h - ch) / 2, (w - cw) / 2, ch, cw};
}

namespace detail {

/// [C, H, W] image restricted to a crop, as double planes.
template <std::floating_point T>
std::vector<std::vector<double>> crop_planes(const Tensor<T>& img, const CropBox& b) {
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    std::vector<std::vector<double>> planes(C, std::vector<double>(b.height * b.width));
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < b.height; ++y)
            for (std::size_t x = 0; x < b.width; ++x) planes[c][y * b.width + x] = double(img[(c * H + b.top + y) * W + b.left + x]);
    return planes;
}

inline std::vector<double> gaussian_window(std::size_t size = 11, double sigma = 1.5) {
    std::vector<double> g(size);
    const double mid = double(size - 1) / 2;
    double s = 0;
    for (std::size_t i = 0; i < size; ++i) s += g[i] = std::exp(-(double(i) - mid) * (double(i) - mid) / (2 * sigma * sigma));
    for (auto& v : g) v /= s;
    return g;
}

/// Separable 'valid' filtering of an h x w plane.
inline std::vector<double> filter_valid(const std::vector<double>& x, std::size_t h, std::size_t w, const std::vector<double>& g) {
    const std::size_t k = g.size(), oh = h - k + 1, ow = w - k + 1;
    std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x0 = 0; x0 < ow; ++x0) {
            double s = 0;
            for (std::size_t i = 0; i < k; ++i) s += g[i] * x[y * w + x0 + i];
            rows[y * ow + x0] = s;
        }
    for (std::size_t y0 = 0; y0 < oh; ++y0)
        for (std::size_t x0 = 0; x0 < ow; ++x0) {
            double s = 0;
            for (std::size_t i = 0; i < k; ++i) s += g[i] * rows[(y0 + i) * ow + x0];
            out[y0 * ow + x0] = s;
        }
    return out;
}

template <std::floating_point T>
void check_same_image_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape() || a.rank() != 3) throw ShapeError(std::string(op) + ": expected matching [C, H, W] images");
}

}  // namespace detail

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, averaged over channels and valid positions.
inline double ssim_planes(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b, std::size_t h, std::size_t w) {
    if (h < 11 || w < 11) throw ShapeError("ssim: image smaller than the 11x11 window");
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    const auto g = detail::gaussian_window();
    double total = 0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        std::vector<double> xx(h * w), yy(h * w), xy(h * w);
        for (std::size_t i = 0; i < h * w; ++i) {
            xx[i] = a[c][i] * a[c][i];
            yy[i] = b[c][i] * b[c][i];
            xy[i] = a[c][i] * b[c][i];
        }
        const auto mx = detail::filter_valid(a[c], h, w, g), my = detail::filter_valid(b[c], h, w, g);
        const auto sxx = detail::filter_valid(xx, h, w, g), syy = detail::filter_valid(yy, h, w, g), sxy = detail::filter_valid(xy, h, w, g);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
            total += ((2 * mx[i] * my[i] + C1) * (2 * cov + C2)) / ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
            ++count;
        }
    }
    return total / double(count);
}

struct ImageMetrics {
    double psnr = 0, ssim = 0;
};

/// PSNR and SSIM of [C, H, W] images in [0, 1] on the central crop.
template <std::floating_point T>
ImageMetrics compute_metrics(const Tensor<T>& pred, const Tensor<T>& gt) {
    detail::check_same_image_shape(pred, gt, "compute_metrics");
    const CropBox box = central_crop(pred.dim(1), pred.dim(2));
    const auto a = detail::crop_planes(pred, box), b = detail::crop_planes(gt, box);
    double se = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < a.size(); ++c)
        for (std::size_t i = 0; i < a[c].size(); ++i, ++n) se += (a[c][i] - b[c][i]) * (a[c][i] - b[c][i]);
    const double mse = se / double(n);
    return {mse <= 0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse)), ssim_planes(a, b, box.height, box.width)};
}

struct MeanStd {
    double mean = 0, std = 0;
    std::size_t count = 0;
};

/// Sample standard deviation (n - 1); 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    r.count = xs.size();
    if (xs.empty()) return r;
    for (double x : xs) r.mean += x;
    r.mean /= double(xs.size());
    if (xs.size() > 1) {
        double s = 0;
        for (double x : xs) s += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(s / double(xs.size() - 1));
    }
    return r;
}

/// One-sided sign test: P(at least `wins` successes in n fair coin flips).
inline double sign_test_p(std::size_t wins, std::size_t n) {
    double p = 0, c = 1;  // c = C(n, k)
    for (std::size_t k = 0; k <= n; ++k) {
        if (k >= wins) p += c;
        c = c * double(n - k) / double(k + 1);
    }
    return p / std::pow(2.0, double(n));
}

}  // namespace simpli
