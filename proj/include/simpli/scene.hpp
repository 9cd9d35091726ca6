#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/ops.hpp"

namespace simpli {

// ---------------------------------------------------------------------------
// Compositing
// ---------------------------------------------------------------------------

template <std::floating_point T>
struct Composite {
    Tensor<T> channels;  ///< [C, H, W]
    Tensor<T> alpha;     ///< [H, W]
    Tensor<T> payload;   ///< [H, W], undefined when no payload was given
};

namespace detail {

inline constexpr double kAlphaTolerance = 1e-6;

template <std::floating_point T>
void check_alpha(const Tensor<T>& alphas, const char* op) {
    for (T a : alphas.values())
        if (!(a >= -kAlphaTolerance && a <= 1.0 + kAlphaTolerance))
            throw std::invalid_argument(std::string(op) + ": alpha outside [0,1]");
}

/// Over-operator over S back-to-front slices at each of HW pixels. The payload
/// is normalized by accumulated alpha; below `min_alpha` it takes `fallback`.
template <std::floating_point T>
Composite<T> composite_kernel(const Tensor<T>& colors, const Tensor<T>& alphas, const Tensor<T>& payload,
                              double min_alpha, const std::vector<double>& fallback) {
    const std::size_t S = alphas.dim(0), HW = alphas.numel() / S;
    const bool has_colors = colors.defined();
    const bool has_payload = payload.defined();
    const std::size_t C = has_colors ? colors.dim(1) : 0;
    if (has_colors && (colors.dim(0) != S || colors.numel() != S * C * HW)) throw ShapeError("compose_over: colors/alphas mismatch");
    if (has_payload && payload.numel() != S * HW) throw ShapeError("compose_over: payload/alphas mismatch");

    Shape pix(alphas.shape().begin() + 1, alphas.shape().end());
    Shape chan = pix;
    chan.insert(chan.begin(), C);
    Composite<T> out;
    out.alpha = Tensor<T>(pix);
    if (has_colors) out.channels = Tensor<T>(chan);
    if (has_payload) out.payload = Tensor<T>(pix);

    const T* a = alphas.data();
    const T* c = has_colors ? colors.data() : nullptr;
    const T* z = has_payload ? payload.data() : nullptr;
    T* oc = has_colors ? out.channels.data() : nullptr;
    T* oa = out.alpha.data();
    T* oz = has_payload ? out.payload.data() : nullptr;
    for (std::size_t s = 0; s < S; ++s) {
        const T* as = a + s * HW;
        for (std::size_t ch = 0; ch < C; ++ch) {
            const T* cs = c + (s * C + ch) * HW;
            T* o = oc + ch * HW;
            for (std::size_t p = 0; p < HW; ++p) o[p] = cs[p] * as[p] + o[p] * (T(1) - as[p]);
        }
        for (std::size_t p = 0; p < HW; ++p) oa[p] = as[p] + oa[p] * (T(1) - as[p]);
        if (has_payload) {
            const T* zs = z + s * HW;
            for (std::size_t p = 0; p < HW; ++p) oz[p] = zs[p] * as[p] + oz[p] * (T(1) - as[p]);
        }
    }
    // raw payload composite, kept for the quotient rule in backward
    Tensor<T> raw_payload;
    if (has_payload) {
        raw_payload = out.payload.clone();
        for (std::size_t p = 0; p < HW; ++p) {
            const double fb = fallback.size() == 1 ? fallback[0] : fallback[p];
            oz[p] = oa[p] >= min_alpha ? oz[p] / oa[p] : static_cast<T>(fb);
        }
    }

    const bool grad = detail::any_requires_grad<T>({&colors, &alphas, &payload});
    if (!grad) return out;

    // One closure serves all outputs; it is recorded after the last of them is
    // created, so it runs once every consumer has deposited its gradient.
    auto outs = out;
    auto body = [colors, alphas, payload, outs, raw_payload, S, C, HW, min_alpha]() mutable {
        const bool gc = outs.channels.defined() && outs.channels.has_grad();
        const bool ga = outs.alpha.has_grad();
        const bool gz = outs.payload.defined() && outs.payload.has_grad();
        if (!gc && !ga && !gz) return;
        const T* a = alphas.data();
        const T* c = colors.defined() ? colors.data() : nullptr;
        const T* z = payload.defined() ? payload.data() : nullptr;
        T* dc = (colors.defined() && colors.requires_grad()) ? colors.grad_buffer().data() : nullptr;
        T* da = alphas.requires_grad() ? alphas.grad_buffer().data() : nullptr;
        T* dz = (payload.defined() && payload.requires_grad()) ? payload.grad_buffer().data() : nullptr;
        std::vector<T> behind_c(S * C), behind_a(S), behind_z(S);
        std::vector<T> go_c(C);
        for (std::size_t p = 0; p < HW; ++p) {
            for (std::size_t ch = 0; ch < C; ++ch) go_c[ch] = gc ? outs.channels.grad()[ch * HW + p] : T(0);
            T go_a = ga ? outs.alpha.grad()[p] : T(0);
            T go_zraw = T(0);
            if (gz) {
                const T acc = outs.alpha[p];
                if (acc >= min_alpha) {
                    const T g = outs.payload.grad()[p];
                    go_zraw = g / acc;
                    go_a += -g * raw_payload[p] / (acc * acc);
                }
            }
            // running composites of everything behind slice s
            T rc_a = T(0), rc_z = T(0);
            std::vector<T> rc_c(C, T(0));
            for (std::size_t s = 0; s < S; ++s) {
                const T as = a[s * HW + p];
                for (std::size_t ch = 0; ch < C; ++ch) {
                    behind_c[s * C + ch] = rc_c[ch];
                    rc_c[ch] = c[(s * C + ch) * HW + p] * as + rc_c[ch] * (T(1) - as);
                }
                behind_a[s] = rc_a;
                rc_a = as + rc_a * (T(1) - as);
                if (z) {
                    behind_z[s] = rc_z;
                    rc_z = z[s * HW + p] * as + rc_z * (T(1) - as);
                }
            }
            T trans = T(1);  // transmittance of everything in front of s
            for (std::size_t s = S; s-- > 0;) {
                const T as = a[s * HW + p];
                T g_alpha = T(0);
                for (std::size_t ch = 0; ch < C; ++ch) {
                    const T cs = c[(s * C + ch) * HW + p];
                    if (dc) dc[(s * C + ch) * HW + p] += go_c[ch] * as * trans;
                    g_alpha += go_c[ch] * trans * (cs - behind_c[s * C + ch]);
                }
                g_alpha += go_a * trans * (T(1) - behind_a[s]);
                if (z) {
                    if (dz) dz[s * HW + p] += go_zraw * as * trans;
                    g_alpha += go_zraw * trans * (z[s * HW + p] - behind_z[s]);
                }
                if (da) da[s * HW + p] += g_alpha;
                trans *= (T(1) - as);
            }
        }
    };
    // every output is flagged; only the last recorded closure does the work
    if (out.channels.defined()) out.channels.set_requires_grad(true);
    if (out.payload.defined()) out.payload.set_requires_grad(true);
    detail::record(out.alpha, body);
    return out;
}

}  // namespace detail

/// Back-to-front over: C <- c*a + C*(1-a), A <- a + A*(1-a). The optional
/// payload is composited with the same weights and divided by A (0 where A < 1e-6).
/// colors [S, C, H, W]; alphas [S, H, W]; payload [S, H, W] or undefined.
template <std::floating_point T>
Composite<T> compose_over(const Tensor<T>& colors, const Tensor<T>& alphas, const Tensor<T>& payload = Tensor<T>()) {
    detail::check_alpha(alphas, "compose_over");
    return detail::composite_kernel(colors, alphas, payload, 1e-6, {0.0});
}

// ---------------------------------------------------------------------------
// Plane groups and overcomposed depth
// ---------------------------------------------------------------------------

struct LayerGroup {
    std::size_t begin = 0, end = 0;  ///< plane index range [begin, end)
    double depth_far = 0, depth_near = 0;
    double midpoint() const { return 0.5 * (depth_far + depth_near); }
};

struct LayerGroupSpec {
    std::vector<LayerGroup> groups;
    std::size_t layer_count() const { return groups.size(); }
};

/// P planes into L consecutive equal groups, back-to-front.
inline LayerGroupSpec split_groups(const std::vector<double>& plane_depths, std::size_t layers) {
    const std::size_t planes = plane_depths.size();
    if (layers == 0 || planes % layers != 0)
        throw std::invalid_argument("split_groups: layer count " + std::to_string(layers) + " does not divide plane count " + std::to_string(planes));
    const std::size_t per = planes / layers;
    LayerGroupSpec spec;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerGroup g;
        g.begin = l * per;
        g.end = g.begin + per;
        g.depth_far = plane_depths[g.begin];
        g.depth_near = plane_depths[g.end - 1];
        spec.groups.push_back(g);
    }
    return spec;
}

/// Depth of one group: sum_p w_p d_p / W with w_p = a_p * prod_{q in front}(1 - a_q).
/// Falls back to the group midpoint where W < 1e-4. opacities [n_g, h, w].
template <std::floating_point T>
Tensor<T> overcompose_group_depth(const Tensor<T>& opacities, const std::vector<double>& group_depths) {
    const std::size_t n = opacities.dim(0);
    if (group_depths.size() != n) throw ShapeError("overcompose_group_depth: depth count mismatch");
    detail::check_alpha(opacities, "overcompose_group_depth");
    const std::size_t HW = opacities.numel() / n;
    Tensor<T> payload(opacities.shape());
    for (std::size_t s = 0; s < n; ++s) std::fill_n(payload.data() + s * HW, HW, static_cast<T>(group_depths[s]));
    const double lo = *std::min_element(group_depths.begin(), group_depths.end());
    const double hi = *std::max_element(group_depths.begin(), group_depths.end());
    auto c = detail::composite_kernel(Tensor<T>(), opacities, payload, 1e-4, {0.5 * (lo + hi)});
    // rounding can step a hair outside the interval
    for (auto& v : c.payload.values()) v = std::clamp(v, static_cast<T>(lo), static_cast<T>(hi));
    return c.payload;
}

// ---------------------------------------------------------------------------
// Meshes
// ---------------------------------------------------------------------------

struct LayerMesh {
    std::size_t height = 0, width = 0;
    std::vector<Eigen::Vector3d> vertices;           ///< row-major, one per texel
    std::vector<std::array<std::uint32_t, 3>> triangles;
};

/// One vertex per texel; each quad split along its top-left to bottom-right diagonal.
/// `reference` must be at the depth map's resolution.
inline LayerMesh build_layer_mesh(const std::vector<double>& depth, std::size_t h, std::size_t w, const Camera& reference) {
    if (h < 2 || w < 2) throw std::invalid_argument("build_layer_mesh: need at least 2x2 depth map");
    if (depth.size() != h * w) throw ShapeError("build_layer_mesh: depth size mismatch");
    if (reference.width() != w || reference.height() != h) throw ShapeError("build_layer_mesh: reference camera resolution differs from depth map");
    LayerMesh mesh;
    mesh.height = h;
    mesh.width = w;
    mesh.vertices.resize(h * w);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double d = depth[i * w + j];
            if (!(d > 0)) throw std::invalid_argument("build_layer_mesh: non-positive depth at (" + std::to_string(i) + "," + std::to_string(j) + ")");
            mesh.vertices[i * w + j] = unproject(reference, Eigen::Vector2d(double(j), double(i)), d);
        }
    mesh.triangles.reserve(2 * (h - 1) * (w - 1));
    for (std::size_t i = 0; i + 1 < h; ++i)
        for (std::size_t j = 0; j + 1 < w; ++j) {
            const auto tl = static_cast<std::uint32_t>(i * w + j);
            const auto tr = tl + 1;
            const auto bl = static_cast<std::uint32_t>((i + 1) * w + j);
            const auto br = bl + 1;
            mesh.triangles.push_back({tl, tr, br});
            mesh.triangles.push_back({tl, br, bl});
        }
    return mesh;
}

template <std::floating_point T>
LayerMesh build_layer_mesh(const Tensor<T>& depth_map, const Camera& reference) {
    std::vector<double> d(depth_map.values().begin(), depth_map.values().end());
    return build_layer_mesh(d, depth_map.dim(0), depth_map.dim(1), reference);
}

// ---------------------------------------------------------------------------
// Plane and layer stacks
// ---------------------------------------------------------------------------

/// P fronto-parallel planes in the reference frustum. textures [P, C, h, w];
/// `reference` is at texture resolution.
template <std::floating_point T>
struct PlaneStack {
    std::vector<double> depths;  ///< back-to-front, strictly decreasing
    Tensor<T> textures;
    Camera reference;
    DepthRange range;

    std::size_t plane_count() const { return depths.size(); }
    std::size_t channels() const { return textures.dim(1); }

    void validate() const {
        if (textures.rank() != 4 || textures.dim(0) != depths.size()) throw ShapeError("plane stack: texture/depth count mismatch");
        for (std::size_t i = 1; i < depths.size(); ++i)
            if (!(depths[i] < depths[i - 1])) throw std::invalid_argument("plane stack: depths must be strictly decreasing");
        if (reference.height() != textures.dim(2) || reference.width() != textures.dim(3))
            throw ShapeError("plane stack: reference camera resolution differs from textures");
    }
};

/// L deformable layers, back-to-front. textures [L, C, h, w]; depth [L, h, w].
template <std::floating_point T>
struct LayerStack {
    Tensor<T> textures;
    Tensor<T> depth;
    LayerGroupSpec groups;
    Camera reference;

    std::size_t layer_count() const { return groups.layer_count(); }
    std::size_t height() const { return depth.dim(1); }
    std::size_t width() const { return depth.dim(2); }

    LayerMesh mesh(std::size_t layer) const {
        const std::size_t hw = height() * width();
        std::vector<double> d(depth.data() + layer * hw, depth.data() + (layer + 1) * hw);
        return build_layer_mesh(d, height(), width(), reference);
    }

    std::vector<LayerMesh> meshes() const {
        std::vector<LayerMesh> out;
        for (std::size_t l = 0; l < layer_count(); ++l) out.push_back(mesh(l));
        return out;
    }
};

}  // namespace simpli
