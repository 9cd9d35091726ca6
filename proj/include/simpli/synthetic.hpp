#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/parallel.hpp"
#include "simpli/tensor.hpp"

namespace simpli {

/// Square grid of RGB texels in [0, 1]. Texel (i, j) has its center at
/// texture coordinates ((j + 0.5) / n, (i + 0.5) / n).
struct TexelGrid {
    std::size_t n = 0;
    std::vector<double> rgb;  ///< n * n * 3, row-major

    Eigen::Vector3d texel(std::size_t i, std::size_t j) const {
        const double* p = rgb.data() + (i * n + j) * 3;
        return {p[0], p[1], p[2]};
    }

    /// Bilinear lookup at texture coordinates (s, t). `wrap` tiles the grid,
    /// otherwise coordinates clamp to the edge texels.
    Eigen::Vector3d sample(double s, double t, bool wrap) const {
        const double u = s * double(n) - 0.5, v = t * double(n) - 0.5;
        const double fu = std::floor(u), fv = std::floor(v);
        const double au = u - fu, av = v - fv;
        const auto idx = [&](double k) {
            long m = static_cast<long>(k);
            const long N = static_cast<long>(n);
            if (wrap) return static_cast<std::size_t>(((m % N) + N) % N);
            return static_cast<std::size_t>(std::clamp(m, 0L, N - 1));
        };
        const std::size_t j0 = idx(fu), j1 = idx(fu + 1), i0 = idx(fv), i1 = idx(fv + 1);
        return (1 - av) * ((1 - au) * texel(i0, j0) + au * texel(i0, j1)) + av * ((1 - au) * texel(i1, j0) + au * texel(i1, j1));
    }
};

/// Procedural texture families: 0 checker, 1 stripes, 2 rings, 3 corner gradient.
inline constexpr int kTextureKinds = 4;

inline TexelGrid make_texture(int kind, std::uint64_t seed, std::size_t n = 32) {
    if (kind < 0 || kind >= kTextureKinds) throw std::invalid_argument("make_texture: unknown texture id " + std::to_string(kind));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto color = [&] { return Eigen::Vector3d(U(rng), U(rng), U(rng)); };
    const Eigen::Vector3d c0 = color(), c1 = color(), c2 = color(), c3 = color();
    const double freq = 2.0 + std::floor(U(rng) * 4.0);
    const double angle = U(rng) * std::numbers::pi;
    TexelGrid g{n, std::vector<double>(n * n * 3)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double s = (double(j) + 0.5) / double(n), t = (double(i) + 0.5) / double(n);
            Eigen::Vector3d c;
            switch (kind) {
                case 0: {
                    const auto a = static_cast<long>(std::floor(s * freq)) + static_cast<long>(std::floor(t * freq));
                    c = (a % 2 == 0) ? c0 : c1;
                    break;
                }
                case 1: {
                    const double w = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * freq * (s * std::cos(angle) + t * std::sin(angle)));
                    c = (1 - w) * c0 + w * c1;
                    break;
                }
                case 2: {
                    const double r = std::hypot(s - 0.5, t - 0.5);
                    const double w = 0.5 + 0.5 * std::cos(2 * std::numbers::pi * freq * r);
                    c = (1 - w) * c0 + w * c2;
                    break;
                }
                default:
                    c = (1 - t) * ((1 - s) * c0 + s * c1) + t * ((1 - s) * c2 + s * c3);
            }
            for (int k = 0; k < 3; ++k) g.rgb[(i * n + j) * 3 + k] = c[k];
        }
    return g;
}

/// Opaque textured rectangle. Local axes are the columns of `orientation`;
/// the card spans +-half_width along x and +-half_height along y.
struct Card {
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
    double half_width = 1, half_height = 1;
    int texture_id = 0;
    std::uint64_t texture_seed = 0;

    double depth() const { return center.z(); }
};

/// Infinite plane z = depth with a tiled texture of the given texel pitch.
struct Background {
    double depth = 10;
    double texel_size = 0.5;
    int texture_id = 3;
    std::uint64_t texture_seed = 0;
};

struct SyntheticSceneSpec {
    std::vector<Card> cards;
    Background background;
    DepthRange range;
};

struct DatasetConfig {
    DepthRange range{1.0, 10.0};
    std::size_t width = 64, height = 64;
    double focal = 1.0;           ///< focal length in units of image width
    // Small enough that the region outside the reference frustum stays within
    // the metric crop margin for most target views.
    double max_baseline = 0.25;   ///< camera cluster diameter bound, world units
    double max_rotation_deg = 2;  ///< per-camera rotation bound
    double max_tilt_deg = 10;     ///< card tilt bound
    std::size_t min_cards = 2, max_cards = 5;
    std::size_t cameras = 8;  ///< cluster size

    void validate() const {
        range.validate();
        if (width < 8 || height < 8) throw std::invalid_argument("dataset: resolution too small");
        if (!(focal > 0 && max_baseline > 0)) throw std::invalid_argument("dataset: focal and baseline must be positive");
        if (max_rotation_deg < 0 || max_rotation_deg > 5) throw std::invalid_argument("dataset: rotations are limited to 5 degrees");
        if (min_cards < 1 || min_cards > max_cards) throw std::invalid_argument("dataset: invalid card count range");
        if (cameras < 2) throw std::invalid_argument("dataset: need at least 2 cameras per scene");
    }

    Intrinsics intrinsics() const {
        const double f = focal * double(width);
        return {f, f, (double(width) - 1) / 2, (double(height) - 1) / 2, width, height};
    }
};

struct SyntheticScene {
    SyntheticSceneSpec spec;
    std::vector<Camera> cameras;
};

namespace detail {

inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng, double max_angle_rad) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Eigen::Vector3d axis(N(rng), N(rng), N(rng));
    if (axis.norm() < 1e-12) axis = Eigen::Vector3d::UnitZ();
    return Eigen::Quaterniond(Eigen::AngleAxisd(U(rng) * max_angle_rad, axis.normalized()));
}

}  // namespace detail

/// Deterministic per seed. Cameras sit inside a ball of diameter below
/// max_baseline around the origin, looking roughly along +z.
inline SyntheticScene generate_scene(std::uint64_t seed, const DatasetConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double deg = std::numbers::pi / 180.0;
    SyntheticScene scene;
    auto& spec = scene.spec;
    spec.range = cfg.range;

    const std::size_t count = cfg.min_cards + static_cast<std::size_t>(U(rng) * double(cfg.max_cards - cfg.min_cards + 1));
    const std::size_t n_cards = std::min(count, cfg.max_cards);
    // depths uniform in disparity over the inner part of the range
    const double d_far = 1.0 / cfg.range.far, span = 1.0 / cfg.range.near - d_far;
    const Intrinsics k = cfg.intrinsics();
    std::vector<double> depths;
    while (depths.size() < n_cards) {
        const double z = 1.0 / (d_far + span * (0.07 + 0.58 * U(rng)));
        if (std::ranges::all_of(depths, [&](double o) { return std::abs(o - z) > 0.05 * std::min(o, z); })) depths.push_back(z);
    }
    std::ranges::sort(depths, std::greater<>());
    for (double z : depths) {
        const double half_x = z * (double(cfg.width) / 2) / k.fx, half_y = z * (double(cfg.height) / 2) / k.fy;
        Card c;
        c.center = {(2 * U(rng) - 1) * 0.5 * half_x, (2 * U(rng) - 1) * 0.5 * half_y, z};
        c.half_width = (0.25 + 0.35 * U(rng)) * half_x;
        c.half_height = (0.25 + 0.35 * U(rng)) * half_y;
        const double phi = U(rng) * 2 * std::numbers::pi;
        c.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(U(rng) * cfg.max_tilt_deg * deg, Eigen::Vector3d(std::cos(phi), std::sin(phi), 0)));
        c.texture_id = static_cast<int>(U(rng) * kTextureKinds) % kTextureKinds;
        c.texture_seed = rng();
        spec.cards.push_back(c);
    }
    spec.background.depth = cfg.range.far;
    spec.background.texel_size = cfg.range.far * (double(cfg.width) / k.fx) / 8.0 / 32.0 * (1.0 + U(rng));
    spec.background.texture_id = static_cast<int>(U(rng) * kTextureKinds) % kTextureKinds;
    spec.background.texture_seed = rng();

    const double radius = 0.5 * cfg.max_baseline * 0.999;
    while (scene.cameras.size() < cfg.cameras) {
        Eigen::Vector3d t((2 * U(rng) - 1) * radius, (2 * U(rng) - 1) * radius, (2 * U(rng) - 1) * 0.25 * radius);
        if (t.norm() >= radius) continue;
        Camera cam;
        cam.intrinsics = k;
        cam.pose.translation = t;
        cam.pose.rotation = detail::random_rotation(rng, cfg.max_rotation_deg * deg);
        scene.cameras.push_back(cam);
    }
    return scene;
}

struct RayHit {
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

/// Ray parameter and card-local texture coordinates of a hit, if any.
inline bool intersect_card(const Card& c, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double& t, double& s, double& u) {
    const Eigen::Matrix3d R = c.orientation.toRotationMatrix();
    const Eigen::Vector3d n = R.col(2);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) return false;
    t = n.dot(c.center - origin) / denom;
    if (!(t > 0)) return false;
    const Eigen::Vector3d p = origin + t * dir - c.center;
    const double x = R.col(0).dot(p) / c.half_width, y = R.col(1).dot(p) / c.half_height;
    if (std::abs(x) > 1 || std::abs(y) > 1) return false;
    s = 0.5 * (x + 1);
    u = 0.5 * (y + 1);
    return true;
}

/// Ground truth: one ray through each pixel center, nearest card wins, the
/// background plane otherwise (black when the ray never reaches it).
/// Returns [3, H, W].
template <std::floating_point T = double>
Tensor<T> oracle_render(const SyntheticSceneSpec& spec, const Camera& camera) {
    camera.intrinsics.validate();
    const std::size_t H = camera.height(), W = camera.width();
    std::vector<TexelGrid> textures;
    for (const auto& c : spec.cards) textures.push_back(make_texture(c.texture_id, c.texture_seed));
    const TexelGrid bg = make_texture(spec.background.texture_id, spec.background.texture_seed);
    const Eigen::Matrix3d R = camera.pose.rotation_matrix();
    const Eigen::Vector3d origin = camera.center();
    Tensor<T> out(Shape{3, H, W});
    T* o = out.data();
    parallel_for(0, H, [&](std::size_t y) {
            for (std::size_t x = 0; x < W; ++x) {
                const Eigen::Vector3d dir = R * unproject_to_camera(camera.intrinsics, Eigen::Vector2d(double(x), double(y)), 1.0);
                RayHit best;
                for (std::size_t i = 0; i < spec.cards.size(); ++i) {
                    double t, s, u;
                    if (intersect_card(spec.cards[i], origin, dir, t, s, u) && t < best.t) {
                        best.t = t;
                        best.color = textures[i].sample(s, u, false);
                    }
                }
                if (!std::isfinite(best.t) && dir.z() > 1e-12) {
                    const double t = (spec.background.depth - origin.z()) / dir.z();
                    if (t > 0) {
                        const Eigen::Vector3d p = origin + t * dir;
                        best.color = bg.sample(p.x() / (spec.background.texel_size * double(bg.n)), p.y() / (spec.background.texel_size * double(bg.n)), true);
                    }
                }
                for (std::size_t ch = 0; ch < 3; ++ch) o[(ch * H + y) * W + x] = static_cast<T>(best.color[static_cast<Eigen::Index>(ch)]);
            }
    });
    return out;
}

}  // namespace simpli
