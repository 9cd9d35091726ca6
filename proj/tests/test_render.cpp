#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "simpli/render.hpp"
#include "test_support.hpp"

using namespace simpli;
using simpli::testing::max_abs_diff;
using simpli::testing::random_tensor;
using TensorD = Tensor<double>;

namespace {

constexpr double kBoundaryEps = 1e-7;

// Oracle samples landing within rounding distance of the sampling boundary are
// ambiguous (bilinear lookups are zero outside it) and are skipped.
bool near_boundary(const Eigen::Vector2d& p, std::size_t W, std::size_t H) {
    auto close = [](double v, double lim) { return std::abs(v) < kBoundaryEps || std::abs(v - lim) < kBoundaryEps; };
    return close(p.x(), double(W - 1)) || close(p.y(), double(H - 1));
}

std::vector<double> as_vec(const TensorD& t) { return t.storage(); }

Camera fronto_camera(std::size_t w, std::size_t h) {
    Camera c;
    c.intrinsics = {0.9 * double(w), 0.9 * double(w), 0.5 * double(w - 1), 0.5 * double(h - 1), w, h};
    return c;
}

/// Smooth random depth map inside (lo, hi).
std::vector<double> smooth_depth(std::mt19937_64& rng, std::size_t h, std::size_t w, double lo, double hi) {
    std::uniform_real_distribution<double> u(0, 1);
    const double fa = 0.2 + 0.5 * u(rng), fb = 0.2 + 0.5 * u(rng), ph = 6.28 * u(rng);
    std::vector<double> d(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double s = 0.5 + 0.45 * std::sin(fa * double(j) + ph) * std::cos(fb * double(i));
            d[i * w + j] = lo + (hi - lo) * s;
        }
    return d;
}

/// True when a ray through a slightly perturbed pixel position hits the mesh;
/// used to tell silhouette pixels from genuinely empty ones.
bool near_hit(const LayerMesh& mesh, const Camera& cam, std::size_t x, std::size_t y, double r = 0.02) {
    for (double dx : {-r, r})
        for (double dy : {-r, r})
            if (oracle::cast(mesh, oracle::pixel_ray(cam, double(x) + dx, double(y) + dy))) return true;
    return false;
}

struct LayerSample {
    bool hit = false;
    bool ambiguous = false;
    Eigen::Vector2d uv;
    double depth = 0;
};

LayerSample sample_layer(const LayerMesh& mesh, const Camera& cam, std::size_t x, std::size_t y) {
    LayerSample s;
    const auto ray = oracle::pixel_ray(cam, double(x), double(y));
    auto h = oracle::cast(mesh, ray);
    if (!h) {
        s.ambiguous = near_hit(mesh, cam, x, y);
        return s;
    }
    s.hit = true;
    s.uv = oracle::hit_uv(mesh, *h);
    const Eigen::Vector3d p = ray.origin + h->t * ray.dir;
    s.depth = (cam.pose.rotation.toRotationMatrix().transpose() * (p - cam.pose.translation)).z();
    s.ambiguous = oracle::min_bary(*h) < 1e-4 || near_boundary(s.uv, mesh.width, mesh.height);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plane sweep volume
// ---------------------------------------------------------------------------

TEST(BuildPsv, IdentityWhenSourceIsReference) {
    std::mt19937_64 rng(1);
    auto cam = oracle::random_camera(rng, 10, 8);
    auto f = random_tensor(Shape{1, 3, 8, 10}, rng);
    auto psv = build_psv(f, {cam}, cam, {9.0, 4.0, 1.5}, 8, 10);
    ASSERT_EQ(psv.volume.shape(), (Shape{1, 3, 3, 8, 10}));
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t i = 0; i < 240; ++i) EXPECT_EQ(psv.volume[p * 240 + i], f[i]);
}

TEST(BuildPsv, ConstantFeaturesGiveConstantValidRegion) {
    std::mt19937_64 rng(2);
    auto ref = fronto_camera(12, 10);
    auto src = oracle::random_camera(rng, 12, 10);
    TensorD f(Shape{1, 2, 10, 12}, 0.75);
    auto psv = build_psv(f, {src}, ref, {8.0, 2.0}, 10, 12);
    std::size_t inside = 0;
    for (double v : psv.volume.values()) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 0.75) < 1e-12);
        inside += v != 0.0;
    }
    EXPECT_GT(inside, 0u);
}

TEST(BuildPsv, MatchesRayPlaneOracle) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t V = 3, C = 2, Hs = 14, Ws = 18, h = 9, w = 11;
        std::vector<Camera> cams;
        for (std::size_t v = 0; v < V; ++v) cams.push_back(oracle::random_camera(rng, Ws, Hs));
        auto ref = reference_camera(cams);
        auto depths = plane_depths(DepthRange{1, 10}, 4);
        auto f = random_tensor(Shape{V, C, Hs, Ws}, rng);
        auto psv = build_psv(f, cams, ref, depths, h, w);
        const Camera rref = ref.resized(w, h);
        const auto fv = as_vec(f);
        double worst = 0;
        for (std::size_t v = 0; v < V; ++v) {
            std::vector<double> img(fv.begin() + long(v * C * Hs * Ws), fv.begin() + long((v + 1) * C * Hs * Ws));
            for (std::size_t p = 0; p < depths.size(); ++p)
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x) {
                        auto X = oracle::hit_ref_plane(oracle::pixel_ray(rref, double(x), double(y)), rref, depths[p]);
                        ASSERT_TRUE(X.has_value());
                        auto px = oracle::to_pixel(cams[v], *X);
                        if (px && near_boundary(*px, Ws, Hs)) continue;
                        for (std::size_t c = 0; c < C; ++c) {
                            const double want = px ? oracle::bilinear(img, C, Hs, Ws, c, px->x(), px->y()) : 0.0;
                            const double got = psv.volume[((((v * depths.size() + p) * C) + c) * h + y) * w + x];
                            worst = std::max(worst, std::abs(got - want));
                        }
                    }
        }
        EXPECT_LE(worst, 1e-5) << "seed " << seed;
    }
}

TEST(BuildPsv, GradientsReachFeatures) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 50);
        std::vector<Camera> cams = {oracle::random_camera(rng, 6, 5), oracle::random_camera(rng, 6, 5)};
        auto ref = reference_camera(cams);
        auto w = random_tensor(Shape{2, 3, 2, 4, 5}, rng);
        std::function<TensorD(const TensorD&)> f = [&](const TensorD& x) {
            return sum(mul(build_psv(x, cams, ref, {6.0, 3.0, 1.5}, 4, 5).volume, w));
        };
        EXPECT_LE(simpli::testing::gradient_error(f, random_tensor(Shape{2, 2, 5, 6}, rng)), 1e-4);
    }
}

// ---------------------------------------------------------------------------
// MPI rendering
// ---------------------------------------------------------------------------

namespace {

PlaneStack<double> random_plane_stack(std::mt19937_64& rng, std::size_t P, std::size_t h, std::size_t w, const Camera& ref) {
    PlaneStack<double> s;
    s.range = DepthRange{1, 10};
    s.depths = plane_depths(s.range, P);
    s.textures = random_tensor(Shape{P, 4, h, w}, rng, 0, 1);
    s.reference = ref;
    return s;
}

}  // namespace

TEST(RenderPlaneStack, ReferenceViewEqualsComposeOverExactly) {
    std::mt19937_64 rng(3);
    auto ref = oracle::random_camera(rng, 9, 7);
    auto s = random_plane_stack(rng, 5, 7, 9, ref);
    auto out = render_plane_stack(s, ref);
    auto colors = slice(s.textures, 1, 0, 3);
    auto alphas = reshape(slice(s.textures, 1, 3, 4), Shape{5, 7, 9});
    auto direct = compose_over(colors, alphas);
    EXPECT_EQ(out.channels.storage(), direct.channels.storage());
    EXPECT_EQ(out.alpha.storage(), direct.alpha.storage());
}

TEST(RenderPlaneStack, TranslationShiftsTexture) {
    Camera ref;
    ref.intrinsics = {10, 10, 7.5, 5.5, 16, 12};
    PlaneStack<double> s;
    s.depths = {5.0, 4.0};
    std::mt19937_64 rng(9);
    s.textures = random_tensor(Shape{2, 4, 12, 16}, rng, 0, 1);
    for (std::size_t i = 0; i < 12 * 16; ++i) {
        s.textures[(0 * 4 + 3) * 192 + i] = 1.0;  // back plane opaque
        s.textures[(1 * 4 + 3) * 192 + i] = 0.0;  // front plane invisible
    }
    s.reference = ref;
    Camera tgt = ref;
    tgt.pose.translation = {1.0, 0, 0};  // shift = fx * t / d = 2 px
    auto out = render_plane_stack(s, tgt);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 12; ++y)
            for (std::size_t x = 0; x < 16; ++x) {
                const double got = out.channels[(c * 12 + y) * 16 + x];
                const double want = x + 2 < 16 ? s.textures[(c * 12 + y) * 16 + x + 2] : 0.0;
                EXPECT_NEAR(got, want, 1e-12);
            }
}

TEST(RenderPlaneStack, MatchesRayMarchOracle) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        std::mt19937_64 rng(seed + 20);
        const std::size_t P = 5, h = 10, w = 12, H = 13, W = 15;
        auto ref = oracle::random_camera(rng, w, h);
        auto s = random_plane_stack(rng, P, h, w, ref);
        auto tgt = oracle::random_camera(rng, W, H, 0.15, 0.6);
        auto out = render_plane_stack(s, tgt);
        const auto tex = as_vec(s.textures);
        double worst = 0;
        std::size_t checked = 0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double col[3] = {0, 0, 0}, acc = 0, dz = 0;
                bool skip = false;
                for (std::size_t p = 0; p < P; ++p) {
                    std::vector<double> plane(tex.begin() + long(p * 4 * h * w), tex.begin() + long((p + 1) * 4 * h * w));
                    auto X = oracle::hit_ref_plane(oracle::pixel_ray(tgt, double(x), double(y)), ref, s.depths[p]);
                    if (!X) continue;
                    auto uv = oracle::to_pixel(ref, *X);
                    if (!uv) continue;
                    if (near_boundary(*uv, w, h)) skip = true;
                    const double a = oracle::bilinear(plane, 4, h, w, 3, uv->x(), uv->y());
                    for (std::size_t c = 0; c < 3; ++c) col[c] = oracle::bilinear(plane, 4, h, w, c, uv->x(), uv->y()) * a + col[c] * (1 - a);
                    acc = a + acc * (1 - a);
                    dz = s.depths[p] * a + dz * (1 - a);
                }
                if (skip) continue;
                ++checked;
                const std::size_t i = y * W + x;
                for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(out.channels[c * H * W + i] - col[c]));
                worst = std::max(worst, std::abs(out.alpha[i] - acc));
                if (acc >= 1e-6) worst = std::max(worst, std::abs(out.depth[i] - dz / acc) / 10.0);
            }
        EXPECT_GT(checked, H * W / 2);
        EXPECT_LE(worst, 1e-5) << "seed " << seed;
    }
}

TEST(RenderPlaneStack, GradientsReachTextures) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 300);
        auto ref = oracle::random_camera(rng, 5, 4);
        auto s = random_plane_stack(rng, 3, 4, 5, ref);
        auto tgt = oracle::random_camera(rng, 6, 5);
        auto w = random_tensor(Shape{3, 5, 6}, rng), wa = random_tensor(Shape{5, 6}, rng);
        std::function<TensorD(const TensorD&)> f = [&](const TensorD& t) {
            auto st = s;
            st.textures = t;
            auto o = render_plane_stack(st, tgt);
            return add(sum(mul(o.channels, w)), sum(mul(o.alpha, wa)));
        };
        EXPECT_LE(simpli::testing::gradient_error(f, random_tensor(Shape{3, 4, 4, 5}, rng, 0.05, 0.95)), 1e-4);
    }
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

TEST(RasterizeLayer, FrontoParallelReproducesTexture) {
    std::mt19937_64 rng(4);
    const std::size_t h = 12, w = 16;
    auto ref = fronto_camera(w, h);
    auto mesh = build_layer_mesh(std::vector<double>(h * w, 3.0), h, w, ref);
    auto tex = random_tensor(Shape{3, h, w}, rng, 0, 1);
    auto out = rasterize_layer(mesh, tex, ref);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 1; y + 1 < h; ++y)
            for (std::size_t x = 1; x + 1 < w; ++x) EXPECT_NEAR(out.channels[(c * h + y) * w + x], tex[(c * h + y) * w + x], 1e-3);
    for (std::size_t i = 0; i < h * w; ++i)
        if (out.coverage[i]) EXPECT_NEAR(out.depth[i], 3.0, 1e-9);
}

TEST(RasterizeLayer, CameraFacingAwayCoversNothing) {
    const std::size_t h = 6, w = 8;
    auto ref = fronto_camera(w, h);
    auto mesh = build_layer_mesh(std::vector<double>(h * w, 2.0), h, w, ref);
    Camera away = ref;
    away.pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(3.14159265358979, Eigen::Vector3d::UnitY()));
    auto out = rasterize_layer(mesh, TensorD(Shape{4, h, w}, 1.0), away);
    for (auto c : out.coverage) EXPECT_EQ(c, 0);
    for (double a : out.alpha.values()) EXPECT_EQ(a, 0.0);
    for (double d : out.depth.values()) EXPECT_EQ(d, 0.0);
}

TEST(RasterizeLayer, SharedEdgesLeaveNoHoles) {
    // A flat mesh seen head-on covers every pixel whose center lies inside
    // its hull, including centers exactly on the diagonal edges.
    const std::size_t h = 9, w = 9;
    auto ref = fronto_camera(w, h);
    auto mesh = build_layer_mesh(std::vector<double>(h * w, 2.0), h, w, ref);
    Camera zoom = ref;
    zoom.intrinsics.fx *= 2;
    zoom.intrinsics.fy *= 2;
    zoom.intrinsics.width = zoom.intrinsics.height = 17;
    zoom.intrinsics.cx = zoom.intrinsics.cy = 8;
    auto frag = rasterize_mesh(mesh, zoom);
    for (std::size_t y = 0; y < 17; ++y)
        for (std::size_t x = 0; x < 17; ++x) {
            // texture coordinate of this pixel center
            const double u = (double(x) - 8) / 2 + ref.intrinsics.cx, v = (double(y) - 8) / 2 + ref.intrinsics.cy;
            const bool inside = u > 0 && v > 0 && u < double(w - 1) && v < double(h - 1);
            if (inside) EXPECT_EQ(frag.coverage[y * 17 + x], 1) << x << "," << y;
        }
}

TEST(RasterizeLayer, MatchesRayCastOracle) {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        std::mt19937_64 rng(seed + 40);
        const std::size_t h = 9, w = 11, H = 20, W = 24;
        auto ref = oracle::random_camera(rng, w, h);
        auto mesh = build_layer_mesh(smooth_depth(rng, h, w, 2.0, 4.0), h, w, ref);
        auto tex = random_tensor(Shape{4, h, w}, rng, 0, 1);
        auto tgt = oracle::random_camera(rng, W, H, 0.2, 0.8);
        auto out = rasterize_layer(mesh, tex, tgt);
        const auto tv = as_vec(tex);
        double worst = 0;
        std::size_t checked = 0, covered = 0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                auto s = sample_layer(mesh, tgt, x, y);
                if (s.ambiguous) continue;
                const std::size_t i = y * W + x;
                ++checked;
                ASSERT_EQ(bool(out.coverage[i]), s.hit) << "seed " << seed << " pixel " << x << "," << y;
                if (!s.hit) continue;
                ++covered;
                for (std::size_t c = 0; c < 3; ++c)
                    worst = std::max(worst, std::abs(out.channels[c * H * W + i] - oracle::bilinear(tv, 4, h, w, c, s.uv.x(), s.uv.y())));
                worst = std::max(worst, std::abs(out.alpha[i] - oracle::bilinear(tv, 4, h, w, 3, s.uv.x(), s.uv.y())));
                worst = std::max(worst, std::abs(out.depth[i] - s.depth));
            }
        EXPECT_GT(covered, 20u);
        EXPECT_GT(checked, H * W * 3 / 4);
        EXPECT_LE(worst, 1e-3) << "seed " << seed;
    }
}

// ---------------------------------------------------------------------------
// Layer stacks
// ---------------------------------------------------------------------------

namespace {

LayerStack<double> random_layer_stack(std::mt19937_64& rng, std::size_t L, std::size_t h, std::size_t w, const Camera& ref) {
    auto depths = plane_depths(DepthRange{1, 10}, 2 * L);
    LayerStack<double> s;
    s.groups = split_groups(depths, L);
    s.reference = ref;
    s.textures = random_tensor(Shape{L, 4, h, w}, rng, 0, 1);
    s.depth = TensorD(Shape{L, h, w});
    for (std::size_t l = 0; l < L; ++l) {
        auto d = smooth_depth(rng, h, w, s.groups.groups[l].depth_near, s.groups.groups[l].depth_far);
        std::copy(d.begin(), d.end(), s.depth.data() + l * h * w);
    }
    return s;
}

}  // namespace

TEST(RenderLayerStack, ZeroAlphaIsBlack) {
    std::mt19937_64 rng(6);
    auto ref = fronto_camera(8, 6);
    auto s = random_layer_stack(rng, 2, 6, 8, ref);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t i = 0; i < 48; ++i) s.textures[(l * 4 + 3) * 48 + i] = 0.0;
    auto out = render_layer_stack(s, oracle::random_camera(rng, 8, 6));
    for (double v : out.channels.values()) EXPECT_EQ(v, 0.0);
    for (double v : out.alpha.values()) EXPECT_EQ(v, 0.0);
}

TEST(RenderLayerStack, FrontOpaqueSquareOccludesBack) {
    const std::size_t h = 12, w = 12;
    auto ref = fronto_camera(w, h);
    LayerStack<double> s;
    s.groups = split_groups(plane_depths(DepthRange{1, 10}, 4), 2);
    s.reference = ref;
    s.depth = TensorD(Shape{2, h, w});
    s.textures = TensorD(Shape{2, 4, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            s.depth[i] = 6.0;
            s.depth[h * w + i] = 1.5;
            s.textures[(0 * 4 + 0) * h * w + i] = 1.0;  // back: opaque red
            s.textures[(0 * 4 + 3) * h * w + i] = 1.0;
            const bool square = x >= 3 && x <= 8 && y >= 3 && y <= 8;
            s.textures[(4 + 2) * h * w + i] = 1.0;  // front: blue, opaque inside the square
            s.textures[(4 + 3) * h * w + i] = square ? 1.0 : 0.0;
        }
    Camera tgt = ref;
    tgt.pose.translation = {0.15, -0.1, 0};
    auto out = render_layer_stack(s, tgt);
    // Ray-cast: per layer nearest hit, bilinear RGBA, composite back-to-front.
    auto meshes = s.meshes();
    const auto tex = as_vec(s.textures);
    std::size_t checked = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double col[3] = {0, 0, 0};
            bool skip = false;
            for (std::size_t l = 0; l < 2; ++l) {
                auto smp = sample_layer(meshes[l], tgt, x, y);
                skip |= smp.ambiguous;
                if (!smp.hit) continue;
                std::vector<double> t(tex.begin() + long(l * 4 * h * w), tex.begin() + long((l + 1) * 4 * h * w));
                const double a = oracle::bilinear(t, 4, h, w, 3, smp.uv.x(), smp.uv.y());
                for (std::size_t c = 0; c < 3; ++c) col[c] = oracle::bilinear(t, 4, h, w, c, smp.uv.x(), smp.uv.y()) * a + col[c] * (1 - a);
            }
            if (skip) continue;
            ++checked;
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.channels[(c * h + y) * w + x], col[c], 1e-3);
        }
    EXPECT_GT(checked, h * w / 2);
    // a pixel well inside the square's footprint shows pure blue
    EXPECT_NEAR(out.channels[(2 * h + 6) * w + 5], 1.0, 1e-9);
    EXPECT_NEAR(out.channels[(0 * h + 6) * w + 5], 0.0, 1e-9);
}

TEST(RenderLayerStack, MatchesRayCastOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed + 60);
        const std::size_t L = 3, h = 8, w = 10, H = 14, W = 16;
        auto ref = oracle::random_camera(rng, w, h);
        auto s = random_layer_stack(rng, L, h, w, ref);
        auto tgt = oracle::random_camera(rng, W, H, 0.15, 0.5);
        auto out = render_layer_stack(s, tgt);
        auto meshes = s.meshes();
        const auto tex = as_vec(s.textures);
        double worst = 0;
        std::size_t checked = 0;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                double col[3] = {0, 0, 0}, acc = 0;
                bool skip = false;
                for (std::size_t l = 0; l < L; ++l) {
                    auto smp = sample_layer(meshes[l], tgt, x, y);
                    skip |= smp.ambiguous;
                    if (!smp.hit) continue;
                    std::vector<double> t(tex.begin() + long(l * 4 * h * w), tex.begin() + long((l + 1) * 4 * h * w));
                    const double a = oracle::bilinear(t, 4, h, w, 3, smp.uv.x(), smp.uv.y());
                    for (std::size_t c = 0; c < 3; ++c) col[c] = oracle::bilinear(t, 4, h, w, c, smp.uv.x(), smp.uv.y()) * a + col[c] * (1 - a);
                    acc = a + acc * (1 - a);
                }
                if (skip) continue;
                ++checked;
                const std::size_t i = y * W + x;
                for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(out.channels[c * H * W + i] - col[c]));
                worst = std::max(worst, std::abs(out.alpha[i] - acc));
            }
        EXPECT_GT(checked, H * W / 2);
        EXPECT_LE(worst, 1e-3) << "seed " << seed;
    }
}

TEST(RenderLayerStack, FlatLayersMatchPlaneStack) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(seed + 80);
        const std::size_t P = 4, h = 10, w = 12;
        auto ref = oracle::random_camera(rng, w, h);
        auto mpi = random_plane_stack(rng, P, h, w, ref);
        LayerStack<double> mli;
        mli.groups = split_groups(mpi.depths, P);
        mli.reference = ref;
        mli.textures = mpi.textures;
        mli.depth = TensorD(Shape{P, h, w});
        for (std::size_t p = 0; p < P; ++p) std::fill_n(mli.depth.data() + p * h * w, h * w, mpi.depths[p]);
        auto tgt = oracle::random_camera(rng, w, h, 0.1, 0.3);
        auto a = render_plane_stack(mpi, tgt);
        auto b = render_layer_stack(mli, tgt);
        auto meshes = mli.meshes();
        double worst = 0;
        std::size_t checked = 0;
        for (std::size_t y = 1; y + 1 < h; ++y)
            for (std::size_t x = 1; x + 1 < w; ++x) {
                bool skip = false;
                for (const auto& m : meshes) skip |= sample_layer(m, tgt, x, y).ambiguous;
                if (skip) continue;
                ++checked;
                const std::size_t i = y * w + x;
                for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a.channels[c * h * w + i] - b.channels[c * h * w + i]));
                worst = std::max(worst, std::abs(a.alpha[i] - b.alpha[i]));
            }
        EXPECT_GT(checked, (h - 2) * (w - 2) / 2);
        EXPECT_LE(worst, 1e-3) << "seed " << seed;
    }
}

TEST(RenderLayerStack, TexelGradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 500);
        auto ref = oracle::random_camera(rng, 8, 8);
        auto s = random_layer_stack(rng, 2, 8, 8, ref);
        auto tgt = oracle::random_camera(rng, 8, 8, 0.1, 0.3);
        auto meshes = s.meshes();
        auto w = random_tensor(Shape{3, 8, 8}, rng);
        std::function<TensorD(const TensorD&)> f = [&](const TensorD& t) {
            auto st = s;
            st.textures = t;
            return sum(mul(render_layer_stack(st, meshes, tgt).channels, w));
        };
        EXPECT_LE(simpli::testing::gradient_error(f, random_tensor(Shape{2, 4, 8, 8}, rng, 0.05, 0.95)), 1e-3);
    }
}

// ---------------------------------------------------------------------------
// Unprojection onto layers
// ---------------------------------------------------------------------------

TEST(UnprojectOntoLayers, FlatLayerAtReferenceMatchesPsv) {
    std::mt19937_64 rng(7);
    const std::size_t h = 8, w = 10;
    auto ref = oracle::random_camera(rng, w, h);
    LayerStack<double> s;
    s.groups = split_groups({6.0, 2.0}, 2);
    s.reference = ref;
    s.textures = TensorD(Shape{2, 4, h, w});
    s.depth = TensorD(Shape{2, h, w});
    std::fill_n(s.depth.data(), h * w, 6.0);
    std::fill_n(s.depth.data() + h * w, h * w, 2.0);
    auto img = random_tensor(Shape{3, h, w}, rng);
    auto got = unproject_onto_layers(img, ref, s);
    auto psv = build_psv(reshape(img, Shape{1, 3, h, w}), {ref}, ref, {6.0, 2.0}, h, w);
    EXPECT_LE(max_abs_diff(got, reshape(psv.volume, Shape{2, 3, h, w})), 1e-9);
}

TEST(UnprojectOntoLayers, OutsideIsZeroAndConstantStaysConstant) {
    std::mt19937_64 rng(8);
    const std::size_t h = 6, w = 7;
    auto ref = fronto_camera(w, h);
    LayerStack<double> s;
    s.groups = split_groups({5.0, 3.0}, 1);
    s.reference = ref;
    s.textures = TensorD(Shape{1, 4, h, w});
    s.depth = TensorD(Shape{1, h, w}, 4.0);
    Camera src = ref;
    src.pose.translation = {1.5, 0, 0};  // shifts by ~fx*1.5/4 = 2.4 px
    auto got = unproject_onto_layers(TensorD(Shape{2, h, w}, 0.6), src, s);
    std::size_t zeros = 0, inside = 0;
    for (double v : got.values()) {
        if (v == 0.0) ++zeros;
        else {
            EXPECT_NEAR(v, 0.6, 1e-12);
            ++inside;
        }
    }
    EXPECT_GT(zeros, 0u);
    EXPECT_GT(inside, 0u);
}

TEST(UnprojectOntoLayers, GradientsReachImage) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 700);
        auto ref = oracle::random_camera(rng, 5, 4);
        auto s = random_layer_stack(rng, 2, 4, 5, ref);
        auto src = oracle::random_camera(rng, 6, 5);
        auto w = random_tensor(Shape{2, 2, 4, 5}, rng);
        std::function<TensorD(const TensorD&)> f = [&](const TensorD& img) { return sum(mul(unproject_onto_layers(img, src, s), w)); };
        EXPECT_LE(simpli::testing::gradient_error(f, random_tensor(Shape{2, 5, 6}, rng)), 1e-4);
    }
}
