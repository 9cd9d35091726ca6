#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/ops.hpp"
#include "simpli/scene.hpp"

namespace simpli::nn {

enum class Init {
    kaiming,  ///< U(-b, b), b = sqrt(6 / fan_in)
    small,    ///< kaiming scaled by 0.1; residual branch outputs
    uniform,  ///< U(-1, 1); attention anchors
    zeros,
};

namespace detail {
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace detail

/// Named parameters in creation order. Each tensor's initial values depend
/// only on (seed, name, shape), so stores of different precision built from
/// the same seed hold the same numbers.
template <std::floating_point T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor<T> create(const std::string& name, Shape shape, Init init, std::size_t fan_in) {
        if (index_.contains(name)) throw std::invalid_argument("parameter store: duplicate name '" + name + "'");
        Tensor<T> t(std::move(shape));
        std::mt19937_64 rng(seed_ ^ detail::fnv1a(name));
        double bound = 0;
        switch (init) {
            case Init::kaiming: bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, fan_in))); break;
            case Init::small: bound = 0.1 * std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(1, fan_in))); break;
            case Init::uniform: bound = 1.0; break;
            case Init::zeros: break;
        }
        if (bound > 0) {
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : t.values()) v = static_cast<T>(u(rng));
        }
        t.set_requires_grad(true);
        index_.emplace(name, items_.size());
        items_.emplace_back(name, t);
        return t;
    }

    bool contains(const std::string& name) const { return index_.contains(name); }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("parameter store: no parameter '" + name + "'");
        return items_[it->second].second;
    }
    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    std::uint64_t seed() const { return seed_; }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : items_) n += t.numel();
        return n;
    }

    void zero_grad() const {
        for (const auto& [_, t] : items_) t.zero_grad();
    }

    /// Overwrites values from another store with identical names and shapes.
    template <std::floating_point U>
    void copy_values_from(const ParameterStore<U>& other) {
        if (other.size() != size()) throw std::invalid_argument("parameter store: size mismatch");
        for (std::size_t i = 0; i < items_.size(); ++i) {
            const auto& [name, src] = other.items()[i];
            auto& dst = items_[i].second;
            if (name != items_[i].first || src.shape() != dst.shape()) throw std::invalid_argument("parameter store: layout mismatch at '" + name + "'");
            std::transform(src.values().begin(), src.values().end(), dst.values().begin(), [](U v) { return static_cast<T>(v); });
        }
    }

private:
    std::uint64_t seed_;
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Name prefix into a store.
template <std::floating_point T>
struct Scope {
    ParameterStore<T>* store;
    std::string prefix;

    Scope sub(const std::string& name) const { return {store, prefix.empty() ? name : prefix + "." + name}; }
    Tensor<T> param(const std::string& name, Shape shape, Init init, std::size_t fan_in) const {
        return store->create(prefix.empty() ? name : prefix + "." + name, std::move(shape), init, fan_in);
    }
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// x [..., in] -> [..., out]
template <std::floating_point T>
struct Linear {
    Tensor<T> weight, bias;

    Linear() = default;
    Linear(const Scope<T>& s, std::size_t in, std::size_t out, Init init = Init::kaiming)
        : weight(s.param("w", {in, out}, init, in)), bias(s.param("b", {out}, Init::zeros, in)) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

/// Same-padded convolution. rank 2: x [N, Ci, H, W]; rank 3: x [Ci, D, H, W].
template <std::floating_point T>
struct Conv {
    Tensor<T> kernel, bias;
    std::size_t dims = 2;

    Conv() = default;
    Conv(const Scope<T>& s, std::size_t dims_, std::size_t in, std::size_t out, std::size_t k, Init init = Init::kaiming) : dims(dims_) {
        Shape shape{out, in};
        for (std::size_t i = 0; i < dims; ++i) shape.push_back(k);
        const std::size_t fan_in = in * static_cast<std::size_t>(std::pow(k, dims));
        kernel = s.param("k", shape, init, fan_in);
        bias = s.param("b", {out}, Init::zeros, fan_in);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return dims == 2 ? conv2d(x, kernel, bias) : conv3d(x, kernel, bias); }
};

/// x + conv(relu(conv(relu(x)))); the second conv starts small so a fresh
/// block is close to the identity.
template <std::floating_point T>
struct ResidualBlock {
    Conv<T> a, b;

    ResidualBlock() = default;
    ResidualBlock(const Scope<T>& s, std::size_t dims, std::size_t channels)
        : a(s.sub("a"), dims, channels, channels, 3), b(s.sub("b"), dims, channels, channels, 3, Init::small) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return add(x, b(relu(a(relu(x))))); }
};

/// Single-head self-attention, residual-free: o(softmax(q k^T / sqrt(d)) v).
/// x [B, n, d] -> [B, n, d]
template <std::floating_point T>
struct SelfAttention {
    Linear<T> q, k, v, o;
    std::size_t width = 0;

    SelfAttention() = default;
    SelfAttention(const Scope<T>& s, std::size_t d)
        : q(s.sub("q"), d, d), k(s.sub("k"), d, d), v(s.sub("v"), d, d), o(s.sub("o"), d, d), width(d) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto logits = scale(matmul(q(x), transpose_last(k(x))), 1.0 / std::sqrt(static_cast<double>(width)));
        return o(matmul(softmax_axis(logits, logits.rank() - 1), v(x)));
    }
};

/// Trainable anchors query the input set. x [B, n, d] -> [B, m, out]
template <std::floating_point T>
struct AttentionPool {
    Tensor<T> anchors;  ///< [m, d]
    Linear<T> k, v, o;
    std::size_t width = 0;

    AttentionPool() = default;
    AttentionPool(const Scope<T>& s, std::size_t d, std::size_t anchor_count, std::size_t out)
        : anchors(s.param("anchors", {anchor_count, d}, Init::uniform, d)), k(s.sub("k"), d, d), v(s.sub("v"), d, d), o(s.sub("o"), d, out), width(d) {}

    std::size_t anchor_count() const { return anchors.dim(0); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto logits = scale(matmul(anchors, transpose_last(k(x))), 1.0 / std::sqrt(static_cast<double>(width)));
        return o(matmul(softmax_axis(logits, logits.rank() - 1), v(x)));
    }
};

/// Position-wise C -> 32 -> 4 with sigmoid outputs. x [N, C, h, w] -> [N, 4, h, w]
template <std::floating_point T>
struct RgbaDecoder {
    Conv<T> hidden, out;

    RgbaDecoder() = default;
    RgbaDecoder(const Scope<T>& s, std::size_t in, std::size_t hidden_width = 32)
        : hidden(s.sub("hidden"), 2, in, hidden_width, 1), out(s.sub("out"), 2, hidden_width, 4, 1) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return sigmoid(out(relu(hidden(x)))); }
};

/// Three-scale feature pyramid with top-down merging, then the input image
/// appended. images [V, 3, H, W] -> [V, C' + 3, H, W]; H, W divisible by 4.
template <std::floating_point T>
struct FeatureExtractor {
    Conv<T> c0, c1, c2;
    Conv<T> lat0, lat1, lat2;
    Conv<T> head;

    FeatureExtractor() = default;
    FeatureExtractor(const Scope<T>& s, std::size_t width, std::size_t out)
        : c0(s.sub("c0"), 2, 3, width, 3), c1(s.sub("c1"), 2, width, width, 3), c2(s.sub("c2"), 2, width, width, 3),
          lat0(s.sub("lat0"), 2, width, out, 1), lat1(s.sub("lat1"), 2, width, out, 1), lat2(s.sub("lat2"), 2, width, out, 1),
          head(s.sub("head"), 2, out, out, 3) {}

    Tensor<T> operator()(const Tensor<T>& images) const {
        if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("extract_features: expected [V, 3, H, W], got " + shape_str(images.shape()));
        const std::size_t H = images.dim(2), W = images.dim(3);
        if (H % 4 != 0 || W % 4 != 0) throw ShapeError("extract_features: resolution must be divisible by 4");
        auto l0 = relu(c0(images));
        auto l1 = relu(c1(downsample_area(l0, 2)));
        auto l2 = relu(c2(downsample_area(l1, 2)));
        auto m2 = lat2(l2);
        auto m1 = add(lat1(l1), resize_bilinear(m2, H / 2, W / 2));
        auto m0 = add(lat0(l0), resize_bilinear(m1, H, W));
        return concat<T>({head(relu(m0)), images}, 1);
    }
};

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

namespace detail {

/// View order by lexicographic comparison of the view slices. Any input
/// permutation maps to the same order, which makes downstream floating-point
/// reductions over views bit-identical.
template <std::floating_point T>
std::vector<std::size_t> canonical_view_order(const Tensor<T>& volume) {
    const std::size_t V = volume.dim(0), n = volume.numel() / V;
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const T* d = volume.data();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(d + a * n, d + (a + 1) * n, d + b * n, d + (b + 1) * n);
    });
    return order;
}

template <std::floating_point T>
Tensor<T> reorder_views(const Tensor<T>& volume, const std::vector<std::size_t>& order) {
    bool identity = true;
    for (std::size_t i = 0; i < order.size(); ++i) identity &= order[i] == i;
    if (identity) return volume;
    std::vector<Tensor<T>> parts;
    for (std::size_t v : order) parts.push_back(slice(volume, 0, v, v + 1));
    return concat(parts, 0);
}

}  // namespace detail

/// Reduces the view axis of [V, S, D, h, w] to per-(slice, pixel) vectors
/// [S, h, w, 3D]: attention pooling of the self-attended set, then mean and
/// variance of the raw set.
template <std::floating_point T>
struct ViewReducer {
    SelfAttention<T> attend;
    AttentionPool<T> pool;
    std::size_t width = 0;

    ViewReducer() = default;
    ViewReducer(const Scope<T>& s, std::size_t d) : attend(s.sub("attend"), d), pool(s.sub("pool"), d, 1, d), width(d) {}

    std::size_t output_width() const { return 3 * width; }

    Tensor<T> operator()(const Tensor<T>& volume) const {
        if (volume.rank() != 5 || volume.dim(2) != width)
            throw ShapeError("view reducer: expected [V, S, " + std::to_string(width) + ", h, w], got " + shape_str(volume.shape()));
        const std::size_t V = volume.dim(0), S = volume.dim(1), h = volume.dim(3), w = volume.dim(4);
        auto ordered = detail::reorder_views(volume, detail::canonical_view_order(volume));
        auto seq = reshape(permute(ordered, {1, 3, 4, 0, 2}), Shape{S * h * w, V, width});
        auto pooled = reshape(pool(attend(seq)), Shape{S * h * w, width});
        auto [mean, var] = reduce_stats(seq, 1);
        return reshape(concat<T>({pooled, mean, var}, 1), Shape{S, h, w, 3 * width});
    }
};

/// Initial aggregation: PSV [V, P, C, h, w] -> fMPI [P, C_s, h, w] through
/// 3D convolutions over (P, h, w).
template <std::floating_point T>
struct AggregateInit {
    ViewReducer<T> reduce;
    Conv<T> project;
    ResidualBlock<T> r1, r2;

    AggregateInit() = default;
    AggregateInit(const Scope<T>& s, std::size_t in, std::size_t state)
        : reduce(s.sub("reduce"), in), project(s.sub("project"), 3, 3 * in, state, 3), r1(s.sub("res1"), 3, state), r2(s.sub("res2"), 3, state) {}

    Tensor<T> operator()(const Tensor<T>& psv) const {
        auto x = permute(reduce(psv), {3, 0, 1, 2});  // [3C, P, h, w]
        x = r2(r1(project(x)));
        return permute(x, {1, 0, 2, 3});
    }
};

/// Correction: state [S, C_s, h, w] and discrepancies [V, S, D, h, w] ->
/// state + proj(reduced ++ state), then residual 2D blocks per slice.
template <std::floating_point T>
struct AggregateCorrect {
    ViewReducer<T> reduce;
    Conv<T> project;
    ResidualBlock<T> r1, r2;
    std::size_t state_width = 0;

    AggregateCorrect() = default;
    AggregateCorrect(const Scope<T>& s, std::size_t discrepancy, std::size_t state)
        : reduce(s.sub("reduce"), discrepancy), project(s.sub("project"), 2, 3 * discrepancy + state, state, 3, Init::small),
          r1(s.sub("res1"), 2, state), r2(s.sub("res2"), 2, state), state_width(state) {}

    Tensor<T> operator()(const Tensor<T>& state, const Tensor<T>& discrepancies) const {
        if (state.rank() != 4 || state.dim(1) != state_width) throw ShapeError("aggregate_correct: bad state shape " + shape_str(state.shape()));
        if (discrepancies.rank() != 5 || discrepancies.dim(1) != state.dim(0) || discrepancies.dim(3) != state.dim(2) || discrepancies.dim(4) != state.dim(3))
            throw ShapeError("aggregate_correct: discrepancies " + shape_str(discrepancies.shape()) + " do not match state " + shape_str(state.shape()));
        auto reduced = permute(reduce(discrepancies), {0, 3, 1, 2});  // [S, 3D, h, w]
        auto h = add(state, project(concat<T>({reduced, state}, 1)));
        return r2(r1(h));
    }
};

/// Feature-domain layered representation produced from planes.
template <std::floating_point T>
struct LayerFeatures {
    Tensor<T> textures;   ///< [L, C_s, h, w]
    Tensor<T> depth;      ///< [L, h, w]
    Tensor<T> opacities;  ///< [P, h, w]
    LayerGroupSpec groups;
};

/// Pools P plane features into L layer textures (disparity channel appended so
/// the pool can tell planes apart), predicts per-plane opacity with
/// self-attention along P, and overcomposes depth within each plane group.
template <std::floating_point T>
struct PlanesToLayers {
    AttentionPool<T> pool;
    SelfAttention<T> attend;
    Linear<T> opacity;
    std::size_t state_width = 0;

    PlanesToLayers() = default;
    PlanesToLayers(const Scope<T>& s, std::size_t state, std::size_t layers)
        : pool(s.sub("pool"), state + 1, layers, state), attend(s.sub("attend"), state + 1), opacity(s.sub("opacity"), state + 1, 1), state_width(state) {}

    std::size_t layer_count() const { return pool.anchor_count(); }

    LayerFeatures<T> operator()(const Tensor<T>& planes, const std::vector<double>& depths) const {
        const std::size_t P = planes.dim(0), C = planes.dim(1), h = planes.dim(2), w = planes.dim(3), L = layer_count();
        if (C != state_width || depths.size() != P) throw ShapeError("planes_to_layers: plane stack " + shape_str(planes.shape()) + " does not match configuration");
        LayerFeatures<T> out;
        out.groups = split_groups(depths, L);

        const double d_far = 1.0 / depths.front(), d_near = 1.0 / depths.back();
        Tensor<T> disparity(Shape{P, 1, h, w});
        for (std::size_t p = 0; p < P; ++p)
            std::fill_n(disparity.data() + p * h * w, h * w, static_cast<T>((1.0 / depths[p] - d_far) / (d_near - d_far)));
        auto seq = reshape(permute(concat<T>({planes, disparity}, 1), {2, 3, 0, 1}), Shape{h * w, P, C + 1});

        out.textures = permute(reshape(pool(seq), Shape{h, w, L, C}), {2, 3, 0, 1});
        auto alpha = sigmoid(opacity(attend(seq)));  // [hw, P, 1]
        out.opacities = permute(reshape(alpha, Shape{h, w, P}), {2, 0, 1});

        std::vector<Tensor<T>> maps;
        for (const auto& g : out.groups.groups) {
            std::vector<double> gd(depths.begin() + static_cast<std::ptrdiff_t>(g.begin), depths.begin() + static_cast<std::ptrdiff_t>(g.end));
            maps.push_back(reshape(overcompose_group_depth(slice(out.opacities, 0, g.begin, g.end), gd), Shape{1, h, w}));
        }
        out.depth = concat(maps, 0);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Stage registry
// ---------------------------------------------------------------------------

struct ModelDims {
    std::size_t feature_channels = 13;  ///< C'
    std::size_t state_channels = 16;    ///< C_s
    std::size_t pyramid_width = 16;
    std::size_t decoder_hidden = 32;
    std::size_t layers = 4;  ///< L
    std::size_t tau = 3;

    std::size_t psv_channels() const { return feature_channels + 3; }
};

/// Every learned block of the pipeline, each with its own weights.
template <std::floating_point T>
struct StageRegistry {
    ModelDims dims;
    ParameterStore<T> store;
    FeatureExtractor<T> extract;
    AggregateInit<T> init;
    RgbaDecoder<T> mpi_decoder;
    AggregateCorrect<T> mpi_correct;
    PlanesToLayers<T> to_layers;
    std::vector<RgbaDecoder<T>> mli_decoders;
    std::vector<AggregateCorrect<T>> mli_correct;
    RgbaDecoder<T> final_decoder;

    StageRegistry(const ModelDims& d, std::uint64_t seed) : dims(d), store(seed) {
        if (d.state_channels != d.psv_channels())
            throw std::invalid_argument("model: state channels must equal feature channels + 3 so rendered features are comparable");
        Scope<T> root{&store, ""};
        const std::size_t C = d.psv_channels(), Cs = d.state_channels;
        extract = FeatureExtractor<T>(root.sub("extract"), d.pyramid_width, d.feature_channels);
        init = AggregateInit<T>(root.sub("init"), C, Cs);
        mpi_decoder = RgbaDecoder<T>(root.sub("mpi_decoder"), Cs, d.decoder_hidden);
        mpi_correct = AggregateCorrect<T>(root.sub("mpi_correct"), C + 3, Cs);
        to_layers = PlanesToLayers<T>(root.sub("to_layers"), Cs, d.layers);
        for (std::size_t t = 0; t < d.tau; ++t) {
            mli_decoders.emplace_back(root.sub("mli" + std::to_string(t) + "_decoder"), Cs, d.decoder_hidden);
            mli_correct.emplace_back(root.sub("mli" + std::to_string(t) + "_correct"), 3, Cs);
        }
        final_decoder = RgbaDecoder<T>(root.sub("final_decoder"), Cs, d.decoder_hidden);
    }

    StageRegistry(const StageRegistry&) = delete;
    StageRegistry& operator=(const StageRegistry&) = delete;
};

}  // namespace simpli::nn
