#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/ops.hpp"
#include "simpli/scene.hpp"

namespace simpli {

template <std::floating_point T>
struct RenderOutput {
    Tensor<T> channels;  ///< [C, H, W]
    Tensor<T> alpha;     ///< [H, W]
    Tensor<T> depth;     ///< [H, W], 0 where nothing was drawn
    std::vector<unsigned char> coverage;
};

template <std::floating_point T>
struct PlaneSweepVolume {
    Tensor<T> volume;  ///< [V, P, C, h, w]
    std::vector<Camera> cameras;
    std::vector<double> depths;
    Camera reference;  ///< at h x w
};

namespace detail {

template <std::floating_point T>
Tensor<T> stack_views(const std::vector<Tensor<T>>& views) {
    if (views.empty()) throw ShapeError("need at least one view");
    std::vector<Tensor<T>> parts;
    parts.reserve(views.size());
    for (const auto& v : views) {
        Shape s = v.shape();
        s.insert(s.begin(), 1);
        parts.push_back(reshape(v, s));
    }
    return concat(parts, 0);
}

inline void write_coords(const PixelMap& m, double* dst) {
    for (std::size_t i = 0; i < m.coords.size(); ++i) {
        dst[2 * i] = m.valid[i] ? m.coords[i].x() : -1e6;
        dst[2 * i + 1] = m.valid[i] ? m.coords[i].y() : -1e6;
    }
}

template <std::floating_point T>
Tensor<T> coords_tensor(const std::vector<double>& c, Shape shape) {
    return Tensor<T>(std::move(shape), std::vector<T>(c.begin(), c.end()));
}

}  // namespace detail

/// Samples every view at the plane-induced transform of every reference pixel.
/// features [V, C, Hs, Ws]; `reference` is resized to h x w.
template <std::floating_point T>
PlaneSweepVolume<T> build_psv(const Tensor<T>& features, const std::vector<Camera>& cameras, const Camera& reference,
                              const std::vector<double>& depths, std::size_t h, std::size_t w) {
    const std::size_t V = features.dim(0), P = depths.size();
    if (V == 0 || cameras.size() != V) throw ShapeError("build_psv: view/camera count mismatch");
    PlaneSweepVolume<T> psv;
    psv.cameras = cameras;
    psv.depths = depths;
    psv.reference = reference.resized(w, h);
    std::vector<double> coords(V * P * h * w * 2);
    for (std::size_t v = 0; v < V; ++v) {
        if (cameras[v].width() != features.dim(3) || cameras[v].height() != features.dim(2))
            throw ShapeError("build_psv: camera resolution differs from feature map");
        for (std::size_t p = 0; p < P; ++p)
            detail::write_coords(plane_point_transform(cameras[v], psv.reference, depths[p]), coords.data() + (v * P + p) * h * w * 2);
    }
    psv.volume = grid_sample_batched(features, detail::coords_tensor<T>(coords, Shape{V, P, h, w, 2}));
    return psv;
}

template <std::floating_point T>
PlaneSweepVolume<T> build_psv(const std::vector<Tensor<T>>& features, const std::vector<Camera>& cameras, const Camera& reference,
                              const std::vector<double>& depths, std::size_t h, std::size_t w) {
    return build_psv(detail::stack_views(features), cameras, reference, depths, h, w);
}

/// Inverse-warps every plane into `target` (at output resolution) and composes
/// back-to-front. The last texture channel is alpha; the rest are composited.
template <std::floating_point T>
RenderOutput<T> render_plane_stack(const PlaneStack<T>& stack, const Camera& target) {
    stack.validate();
    const std::size_t P = stack.plane_count(), C = stack.channels();
    if (C < 1) throw ShapeError("render_plane_stack: need an alpha channel");
    const std::size_t H = target.height(), W = target.width();
    std::vector<double> coords(P * H * W * 2);
    for (std::size_t p = 0; p < P; ++p)
        detail::write_coords(plane_inverse_transform(target, stack.reference, stack.depths[p]), coords.data() + p * H * W * 2);
    auto warped = grid_sample_batched(stack.textures, detail::coords_tensor<T>(coords, Shape{P, 1, H, W, 2}));
    warped = reshape(warped, Shape{P, C, H, W});
    Tensor<T> colors = slice(warped, 1, 0, C - 1);
    Tensor<T> alphas = reshape(slice(warped, 1, C - 1, C), Shape{P, H, W});
    Tensor<T> payload(Shape{P, H, W});
    for (std::size_t p = 0; p < P; ++p) std::fill_n(payload.data() + p * H * W, H * W, static_cast<T>(stack.depths[p]));
    auto comp = compose_over(colors, alphas, payload);
    RenderOutput<T> out;
    out.channels = comp.channels;
    out.alpha = comp.alpha;
    out.depth = comp.payload;
    out.coverage.resize(H * W);
    for (std::size_t i = 0; i < H * W; ++i) out.coverage[i] = comp.alpha[i] > T(0);
    return out;
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Per-pixel result of the geometry pass: texture-space coordinates of the
/// nearest fragment (x = column, y = row), its camera depth, and coverage.
struct RasterFragments {
    std::size_t height = 0, width = 0;
    std::vector<double> tex_coords;  ///< [H, W, 2]; far outside where uncovered
    std::vector<double> depth;       ///< [H, W]; 0 where uncovered
    std::vector<unsigned char> coverage;
};

inline constexpr double kNearClip = 1e-6;

/// Z-buffered rasterization with pixel centers at integer coordinates, a
/// top-left fill rule and perspective-correct barycentrics. Triangles with any
/// vertex at or behind the camera plane are dropped.
inline RasterFragments rasterize_mesh(const LayerMesh& mesh, const Camera& cam) {
    const std::size_t H = cam.height(), W = cam.width();
    RasterFragments f;
    f.height = H;
    f.width = W;
    f.tex_coords.assign(H * W * 2, -1e6);
    f.depth.assign(H * W, 0.0);
    f.coverage.assign(H * W, 0);
    std::vector<double> zbuf(H * W, std::numeric_limits<double>::infinity());

    const std::size_t nv = mesh.vertices.size();
    std::vector<Eigen::Vector2d> screen(nv);
    std::vector<double> inv_z(nv);
    std::vector<unsigned char> ok(nv);
    const Eigen::Matrix3d rt = cam.pose.rotation_matrix().transpose();
    const auto& k = cam.intrinsics;
    for (std::size_t i = 0; i < nv; ++i) {
        const Eigen::Vector3d p = rt * (mesh.vertices[i] - cam.pose.translation);
        ok[i] = p.z() > kNearClip;
        if (!ok[i]) continue;
        inv_z[i] = 1.0 / p.z();
        screen[i] = {k.fx * p.x() * inv_z[i] + k.cx, k.fy * p.y() * inv_z[i] + k.cy};
    }

    // Evaluated in vertex-index order so a shared edge yields exactly negated
    // values for its two triangles; no pixel is claimed twice or dropped.
    auto edge = [&](std::uint32_t ia, std::uint32_t ib, double px, double py) {
        const bool flip = ia > ib;
        const Eigen::Vector2d& a = screen[flip ? ib : ia];
        const Eigen::Vector2d& b = screen[flip ? ia : ib];
        const double e = (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
        return flip ? -e : e;
    };
    auto top_left = [&](std::uint32_t ia, std::uint32_t ib) {
        const double dx = screen[ib].x() - screen[ia].x(), dy = screen[ib].y() - screen[ia].y();
        return dy < 0 || (dy == 0 && dx > 0);
    };

    for (const auto& tri : mesh.triangles) {
        std::uint32_t i0 = tri[0], i1 = tri[1], i2 = tri[2];
        if (!ok[i0] || !ok[i1] || !ok[i2]) continue;
        double area = edge(i0, i1, screen[i2].x(), screen[i2].y());
        if (std::abs(area) < 1e-14) continue;
        if (area < 0) {
            std::swap(i1, i2);
            area = -area;
        }
        const Eigen::Vector2d &a = screen[i0], &b = screen[i1], &c = screen[i2];
        const double minx = std::min({a.x(), b.x(), c.x()}), maxx = std::max({a.x(), b.x(), c.x()});
        const double miny = std::min({a.y(), b.y(), c.y()}), maxy = std::max({a.y(), b.y(), c.y()});
        if (maxx < 0 || maxy < 0 || minx > double(W - 1) || miny > double(H - 1)) continue;
        const long x0 = std::max(0L, static_cast<long>(std::ceil(minx)));
        const long x1 = std::min(static_cast<long>(W) - 1, static_cast<long>(std::floor(maxx)));
        const long y0 = std::max(0L, static_cast<long>(std::ceil(miny)));
        const long y1 = std::min(static_cast<long>(H) - 1, static_cast<long>(std::floor(maxy)));
        const bool tl0 = top_left(i1, i2), tl1 = top_left(i2, i0), tl2 = top_left(i0, i1);
        const double u0 = double(i0 % mesh.width), v0 = double(i0 / mesh.width);
        const double u1 = double(i1 % mesh.width), v1 = double(i1 / mesh.width);
        const double u2 = double(i2 % mesh.width), v2 = double(i2 / mesh.width);
        for (long y = y0; y <= y1; ++y) {
            for (long x = x0; x <= x1; ++x) {
                const double px = double(x), py = double(y);
                const double e0 = edge(i1, i2, px, py), e1 = edge(i2, i0, px, py), e2 = edge(i0, i1, px, py);
                if (e0 < 0 || e1 < 0 || e2 < 0) continue;
                if ((e0 == 0 && !tl0) || (e1 == 0 && !tl1) || (e2 == 0 && !tl2)) continue;
                const double l0 = e0 / area, l1 = e1 / area, l2 = e2 / area;
                const double w0 = l0 * inv_z[i0], w1 = l1 * inv_z[i1], w2 = l2 * inv_z[i2];
                const double wsum = w0 + w1 + w2;
                const double z = 1.0 / wsum;
                const std::size_t pix = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
                if (!(z < zbuf[pix])) continue;
                zbuf[pix] = z;
                f.depth[pix] = z;
                f.coverage[pix] = 1;
                f.tex_coords[2 * pix] = (w0 * u0 + w1 * u1 + w2 * u2) / wsum;
                f.tex_coords[2 * pix + 1] = (w0 * v0 + w1 * v1 + w2 * v2) / wsum;
            }
        }
    }
    return f;
}

/// Renders one layer. texture [C, h, w] must match the mesh grid; alpha is the
/// texture's fourth channel when C == 4, otherwise plain coverage.
template <std::floating_point T>
RenderOutput<T> rasterize_layer(const LayerMesh& mesh, const Tensor<T>& texture, const Camera& camera) {
    if (texture.rank() != 3 || texture.dim(1) != mesh.height || texture.dim(2) != mesh.width)
        throw ShapeError("rasterize_layer: texture " + shape_str(texture.shape()) + " does not match mesh grid");
    const std::size_t H = camera.height(), W = camera.width(), C = texture.dim(0);
    RasterFragments frag = rasterize_mesh(mesh, camera);
    auto sampled = grid_sample_bilinear(texture, detail::coords_tensor<T>(frag.tex_coords, Shape{H, W, 2}));
    RenderOutput<T> out;
    if (C == 4) {
        out.channels = slice(sampled, 0, 0, 3);
        out.alpha = reshape(slice(sampled, 0, 3, 4), Shape{H, W});
    } else {
        out.channels = sampled;
        out.alpha = Tensor<T>(Shape{H, W});
        for (std::size_t i = 0; i < H * W; ++i) out.alpha[i] = frag.coverage[i] ? T(1) : T(0);
    }
    out.depth = Tensor<T>(Shape{H, W}, std::vector<T>(frag.depth.begin(), frag.depth.end()));
    out.coverage = std::move(frag.coverage);
    return out;
}

/// Rasterizes each RGBA layer independently and composes the results
/// back-to-front; per-layer depth is composited as payload.
template <std::floating_point T>
RenderOutput<T> render_layer_stack(const LayerStack<T>& stack, const std::vector<LayerMesh>& meshes, const Camera& camera) {
    const std::size_t L = stack.layer_count(), H = camera.height(), W = camera.width();
    if (stack.textures.dim(1) != 4) throw ShapeError("render_layer_stack: RGBA textures required");
    if (meshes.size() != L) throw ShapeError("render_layer_stack: mesh count mismatch");
    std::vector<double> coords(L * H * W * 2);
    std::vector<double> depth(L * H * W);
    std::vector<unsigned char> coverage(H * W, 0);
    for (std::size_t l = 0; l < L; ++l) {
        RasterFragments frag = rasterize_mesh(meshes[l], camera);
        std::copy(frag.tex_coords.begin(), frag.tex_coords.end(), coords.begin() + static_cast<std::ptrdiff_t>(l * H * W * 2));
        std::copy(frag.depth.begin(), frag.depth.end(), depth.begin() + static_cast<std::ptrdiff_t>(l * H * W));
        for (std::size_t i = 0; i < H * W; ++i) coverage[i] |= frag.coverage[i];
    }
    auto sampled = grid_sample_batched(stack.textures, detail::coords_tensor<T>(coords, Shape{L, 1, H, W, 2}));
    sampled = reshape(sampled, Shape{L, 4, H, W});
    Tensor<T> colors = slice(sampled, 1, 0, 3);
    Tensor<T> alphas = reshape(slice(sampled, 1, 3, 4), Shape{L, H, W});
    auto comp = compose_over(colors, alphas, Tensor<T>(Shape{L, H, W}, std::vector<T>(depth.begin(), depth.end())));
    RenderOutput<T> out;
    out.channels = comp.channels;
    out.alpha = comp.alpha;
    out.depth = comp.payload;
    out.coverage = std::move(coverage);
    return out;
}

template <std::floating_point T>
RenderOutput<T> render_layer_stack(const LayerStack<T>& stack, const Camera& camera) {
    return render_layer_stack(stack, stack.meshes(), camera);
}

/// Samples each view at the projection of every layer vertex.
/// images [V, C, Hs, Ws] -> [V, L, C, h, w]; zero outside or behind.
template <std::floating_point T>
Tensor<T> unproject_views_onto_layers(const Tensor<T>& images, const std::vector<Camera>& sources, const std::vector<LayerMesh>& meshes) {
    const std::size_t V = images.dim(0), L = meshes.size();
    if (sources.size() != V) throw ShapeError("unproject_onto_layers: view/camera count mismatch");
    if (L == 0) throw ShapeError("unproject_onto_layers: no layers");
    const std::size_t h = meshes[0].height, w = meshes[0].width;
    std::vector<double> coords(V * L * h * w * 2, -1e6);
    for (std::size_t v = 0; v < V; ++v)
        for (std::size_t l = 0; l < L; ++l) {
            double* dst = coords.data() + (v * L + l) * h * w * 2;
            for (std::size_t i = 0; i < h * w; ++i) {
                auto pr = project(sources[v], meshes[l].vertices[i]);
                if (!pr.valid) continue;
                dst[2 * i] = detail::snap(pr.pixel.x());
                dst[2 * i + 1] = detail::snap(pr.pixel.y());
            }
        }
    return grid_sample_batched(images, detail::coords_tensor<T>(coords, Shape{V, L, h, w, 2}));
}

/// image [C, Hs, Ws] -> [L, C, h, w]
template <std::floating_point T>
Tensor<T> unproject_onto_layers(const Tensor<T>& image, const Camera& source, const LayerStack<T>& stack) {
    auto meshes = stack.meshes();
    auto out = unproject_views_onto_layers(reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)}), {source}, meshes);
    return reshape(out, Shape{meshes.size(), image.dim(0), stack.height(), stack.width()});
}

}  // namespace simpli
