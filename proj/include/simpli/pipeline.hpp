#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/nn.hpp"
#include "simpli/ops.hpp"
#include "simpli/render.hpp"
#include "simpli/scene.hpp"

namespace simpli {

struct PipelineConfig {
    std::size_t planes = 8;            ///< P
    std::size_t layers = 4;            ///< L
    std::size_t tau = 1;               ///< MLI correction steps
    std::size_t feature_channels = 5;  ///< C'
    std::size_t state_channels = 8;    ///< C_s
    std::size_t pyramid_width = 8;
    std::size_t decoder_hidden = 32;
    std::size_t height = 64, width = 64;
    bool deterministic = true;

    void validate() const {
        if (layers == 0 || planes % layers != 0) throw std::invalid_argument("config: L must divide P");
        if (planes < 2) throw std::invalid_argument("config: need at least 2 planes");
        if (height % 4 != 0 || width % 4 != 0 || height < 8 || width < 8)
            throw std::invalid_argument("config: resolution must be divisible by 4 and at least 8x8");
        if (state_channels != feature_channels + 3) throw std::invalid_argument("config: state channels must equal feature channels + 3");
    }

    nn::ModelDims dims() const {
        return {.feature_channels = feature_channels, .state_channels = state_channels, .pyramid_width = pyramid_width,
                .decoder_hidden = decoder_hidden, .layers = layers, .tau = tau};
    }
};

template <std::floating_point T>
struct SceneInputs {
    Tensor<T> images;  ///< [V, 3, H, W] in [0, 1]
    std::vector<Camera> cameras;
    DepthRange range;

    std::size_t view_count() const { return cameras.size(); }

    void validate(const PipelineConfig& cfg) const {
        if (cameras.size() < 2) throw std::invalid_argument("scene inputs: need at least 2 source views");
        if (images.rank() != 4 || images.dim(0) != cameras.size() || images.dim(1) != 3)
            throw ShapeError("scene inputs: images " + shape_str(images.shape()) + " do not match " + std::to_string(cameras.size()) + " cameras");
        if (images.dim(2) != cfg.height || images.dim(3) != cfg.width) throw ShapeError("scene inputs: image resolution differs from configuration");
        for (const auto& c : cameras)
            if (c.width() != cfg.width || c.height() != cfg.height) throw ShapeError("scene inputs: camera intrinsics resolution differs from images");
        if (!(range.near > 0 && range.near < range.far)) throw std::invalid_argument("scene inputs: invalid depth range");
    }
};

/// RGBA multilayer image. layers.textures [L, 4, H, W].
template <std::floating_point T>
struct MultiLayerImage {
    LayerStack<T> layers;
    DepthRange range;

    RenderOutput<T> render(const Camera& camera) const { return render_layer_stack(layers, camera); }
};

template <std::floating_point T>
struct StageRecord {
    std::string name;
    Tensor<T> textures;
    Tensor<T> depth;  ///< undefined for plane stages
};

/// fMPI0, fMPI1, fMLI0..fMLI_tau, final MLI.
template <std::floating_point T>
struct StageTrace {
    std::vector<StageRecord<T>> entries;

    void add(std::string name, Tensor<T> textures, Tensor<T> depth = Tensor<T>()) {
        entries.push_back({std::move(name), std::move(textures), std::move(depth)});
    }
    std::size_t size() const { return entries.size(); }
};

template <std::floating_point T>
struct BuildResult {
    MultiLayerImage<T> mli;
    StageTrace<T> trace;
};

namespace detail {

inline std::vector<double> camera_key(const Camera& c) {
    const auto& k = c.intrinsics;
    const auto& q = c.pose.rotation;
    const auto& t = c.pose.translation;
    return {k.fx, k.fy, k.cx, k.cy, double(k.width), double(k.height), q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()};
}

/// Views in a fixed order independent of how they were supplied.
template <std::floating_point T>
SceneInputs<T> canonical_views(const SceneInputs<T>& in) {
    const std::size_t V = in.view_count(), n = in.images.numel() / std::max<std::size_t>(1, V);
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const T* d = in.images.data();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        auto ka = camera_key(in.cameras[a]), kb = camera_key(in.cameras[b]);
        if (ka != kb) return ka < kb;
        return std::lexicographical_compare(d + a * n, d + (a + 1) * n, d + b * n, d + (b + 1) * n);
    });
    SceneInputs<T> out;
    out.range = in.range;
    out.images = Tensor<T>(in.images.shape());
    for (std::size_t i = 0; i < V; ++i) {
        std::copy_n(d + order[i] * n, n, out.images.data() + i * n);
        out.cameras.push_back(in.cameras[order[i]]);
    }
    return out;
}

inline std::vector<Camera> resized(const std::vector<Camera>& cams, std::size_t w, std::size_t h) {
    std::vector<Camera> out;
    for (const auto& c : cams) out.push_back(c.resized(w, h));
    return out;
}

}  // namespace detail

/// Per-view (F - rendered features) ++ (I - rendered RGB) for an fMPI state
/// already at H/2. Returns [V, C_s + 3, H/2, W/2].
template <std::floating_point T>
Tensor<T> mpi_discrepancies(const nn::StageRegistry<T>& model, const Tensor<T>& state, const Tensor<T>& features, const SceneInputs<T>& in,
                            const Camera& reference, const std::vector<double>& depths) {
    const std::size_t h = state.dim(2), w = state.dim(3), V = in.view_count(), Cs = state.dim(1);
    if (features.dim(1) != Cs) throw ShapeError("mpi correction: feature channels differ from state channels");
    PlaneStack<T> stack{depths, concat<T>({state, model.mpi_decoder(state)}, 1), reference.resized(w, h), in.range};
    auto feats = downsample_area(features, features.dim(2) / h);
    auto images = downsample_area(in.images, in.images.dim(2) / h);
    std::vector<Tensor<T>> diffs;
    for (std::size_t v = 0; v < V; ++v) {
        auto r = render_plane_stack(stack, in.cameras[v].resized(w, h));
        auto f_v = reshape(slice(feats, 0, v, v + 1), Shape{Cs, h, w});
        auto i_v = reshape(slice(images, 0, v, v + 1), Shape{3, h, w});
        diffs.push_back(concat<T>({sub(f_v, slice(r.channels, 0, 0, Cs)), sub(i_v, slice(r.channels, 0, Cs, Cs + 3))}, 0));
    }
    return detail::stack_views(diffs);
}

/// Step 2: upsample fMPI0 to H/2, render it to every source, unproject the
/// feature and colour discrepancy onto the planes and correct.
template <std::floating_point T>
Tensor<T> mpi_correction_step(const nn::StageRegistry<T>& model, const Tensor<T>& fmpi0, const Tensor<T>& features, const SceneInputs<T>& in,
                              const Camera& reference, const std::vector<double>& depths) {
    const std::size_t h = in.images.dim(2) / 2, w = in.images.dim(3) / 2;
    auto state = resize_bilinear(fmpi0, h, w);
    auto diffs = mpi_discrepancies(model, state, features, in, reference, depths);
    auto psv = build_psv(diffs, detail::resized(in.cameras, w, h), reference, depths, h, w);
    return model.mpi_correct(state, psv.volume);
}

/// Step 4, iteration t: decode, render to every source at full resolution,
/// unproject the RGB error onto the fixed layer meshes and correct textures.
template <std::floating_point T>
Tensor<T> mli_correction_step(const nn::StageRegistry<T>& model, std::size_t t, const Tensor<T>& state, const LayerStack<T>& geometry,
                              const std::vector<LayerMesh>& meshes, const SceneInputs<T>& in) {
    const std::size_t V = in.view_count(), H = in.images.dim(2), W = in.images.dim(3);
    LayerStack<T> stack = geometry;
    stack.textures = model.mli_decoders.at(t)(state);
    std::vector<Tensor<T>> errors;
    for (std::size_t v = 0; v < V; ++v) {
        auto r = render_layer_stack(stack, meshes, in.cameras[v]);
        errors.push_back(sub(reshape(slice(in.images, 0, v, v + 1), Shape{3, H, W}), r.channels));
    }
    auto unprojected = unproject_views_onto_layers(detail::stack_views(errors), in.cameras, meshes);
    return model.mli_correct.at(t)(state, unprojected);
}

/// Source views to RGBA multilayer image, coarse to fine: H/4 -> H/2 -> H.
template <std::floating_point T>
BuildResult<T> build_scene_representation(const nn::StageRegistry<T>& model, const SceneInputs<T>& raw, const PipelineConfig& cfg) {
    cfg.validate();
    const auto& d = model.dims;
    if (d.feature_channels != cfg.feature_channels || d.state_channels != cfg.state_channels || d.layers != cfg.layers || d.tau != cfg.tau)
        throw std::invalid_argument("build: model dimensions differ from configuration");
    raw.validate(cfg);
    const auto in = detail::canonical_views(raw);
    const std::size_t H = cfg.height, W = cfg.width;
    BuildResult<T> out;

    const auto features = model.extract(in.images);
    const Camera reference = reference_camera(in.cameras);
    const auto depths = plane_depths(in.range, cfg.planes);

    // 1: plane sweep at quarter resolution
    auto psv = build_psv(downsample_area(features, 4), detail::resized(in.cameras, W / 4, H / 4), reference, depths, H / 4, W / 4);
    auto fmpi0 = model.init(psv.volume);
    out.trace.add("fmpi0", fmpi0);

    // 2
    auto fmpi1 = mpi_correction_step(model, fmpi0, features, in, reference, depths);
    out.trace.add("fmpi1", fmpi1);

    // 3: layers at H/2, then lifted to full resolution
    auto lf = model.to_layers(fmpi1, depths);
    LayerStack<T> geometry;
    geometry.depth = resize_bilinear(lf.depth, H, W);
    geometry.groups = lf.groups;
    geometry.reference = reference;
    auto state = resize_bilinear(lf.textures, H, W);
    out.trace.add("fmli0", state, geometry.depth);
    const auto meshes = geometry.meshes();

    // 4
    for (std::size_t t = 0; t < cfg.tau; ++t) {
        state = mli_correction_step(model, t, state, geometry, meshes, in);
        out.trace.add("fmli" + std::to_string(t + 1), state, geometry.depth);
    }

    geometry.textures = model.final_decoder(state);
    out.trace.add("mli", geometry.textures, geometry.depth);
    out.mli = {std::move(geometry), in.range};
    return out;
}

/// FNV-1a over the raw bytes of the final textures and depth maps.
template <std::floating_point T>
std::uint64_t representation_hash(const MultiLayerImage<T>& mli) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const Tensor<T>& t) {
        const auto* b = reinterpret_cast<const unsigned char*>(t.data());
        for (std::size_t i = 0; i < t.numel() * sizeof(T); ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(mli.layers.textures);
    mix(mli.layers.depth);
    return h;
}

}  // namespace simpli
