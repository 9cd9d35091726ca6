#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "simpli/binary_io.hpp"
#include "simpli/pipeline.hpp"

namespace simpli {

inline constexpr std::uint32_t kAssetVersion = 1;

/// In-memory MLI1 file. Layers back-to-front; RGBA interleaved per pixel.
struct MliAsset {
    struct Layer {
        float depth_far = 0, depth_near = 0;
        std::vector<float> depth;         ///< h * w
        std::vector<std::uint8_t> rgba;  ///< h * w * 4
    };
    Camera reference;
    std::uint32_t height = 0, width = 0;
    std::vector<Layer> layers;

    std::size_t byte_size() const { return 20 + 96 + layers.size() * (8 + std::size_t(height) * width * 8); }
    std::size_t texture_bytes() const { return layers.size() * std::size_t(height) * width * 4; }
};

/// Throws FormatError naming the first offending layer (and pixel).
inline void validate_asset(const MliAsset& a) {
    const std::size_t hw = std::size_t(a.height) * a.width;
    if (a.layers.empty()) throw FormatError("asset: no layers");
    if (a.height < 2 || a.width < 2) throw FormatError("asset: layer resolution below 2x2");
    if (a.reference.width() != a.width || a.reference.height() != a.height)
        throw FormatError("asset: reference camera resolution differs from layer resolution");
    try {
        a.reference.intrinsics.validate();
        a.reference.pose.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("asset: invalid reference camera: ") + e.what());
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& L = a.layers[l];
        const std::string at = "asset: layer " + std::to_string(l);
        if (L.depth.size() != hw || L.rgba.size() != hw * 4) throw FormatError(at + ": payload size mismatch");
        if (!(L.depth_near > 0 && L.depth_far >= L.depth_near && std::isfinite(L.depth_far)))
            throw FormatError(at + ": invalid interval [" + std::to_string(L.depth_far) + ", " + std::to_string(L.depth_near) + "]");
        if (l > 0 && !(a.layers[l - 1].depth_near > L.depth_far))
            throw FormatError(at + ": interval overlaps layer " + std::to_string(l - 1) + " (layers must be strictly ordered back-to-front)");
        for (std::size_t i = 0; i < hw; ++i) {
            const float d = L.depth[i];
            if (!(d >= L.depth_near && d <= L.depth_far)) {
                std::ostringstream os;
                os << at << " pixel (" << i / a.width << ", " << i % a.width << "): depth " << d << " outside [" << L.depth_near << ", "
                   << L.depth_far << "]";
                throw FormatError(os.str());
            }
        }
    }
}

inline std::vector<std::uint8_t> encode_asset(const MliAsset& a) {
    validate_asset(a);
    ByteWriter w;
    w.put_string("MLI1");
    w.put<std::uint32_t>(kAssetVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.layers.size()));
    w.put<std::uint32_t>(a.height);
    w.put<std::uint32_t>(a.width);
    const auto& k = a.reference.intrinsics;
    const auto& q = a.reference.pose.rotation;
    const auto& t = a.reference.pose.translation;
    for (double v : {k.fx, k.fy, k.cx, k.cy}) w.put<double>(v);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(k.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(k.height));
    for (double v : {q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z()}) w.put<double>(v);
    for (const auto& L : a.layers) {
        w.put<float>(L.depth_far);
        w.put<float>(L.depth_near);
        for (float d : L.depth) w.put<float>(d);
        w.put_bytes(L.rgba);
    }
    return w.take();
}

inline MliAsset decode_asset(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "asset");
    if (bytes.size() < 4 || r.get_string(4) != "MLI1") throw FormatError("asset: bad magic, not an MLI1 file (unsupported format version)");
    const auto version = r.get<std::uint32_t>();
    if (version != kAssetVersion) throw FormatError("asset: unsupported version " + std::to_string(version));
    MliAsset a;
    const auto L = r.get<std::uint32_t>();
    a.height = r.get<std::uint32_t>();
    a.width = r.get<std::uint32_t>();
    const std::size_t hw = std::size_t(a.height) * a.width;
    auto& k = a.reference.intrinsics;
    k.fx = r.get<double>();
    k.fy = r.get<double>();
    k.cx = r.get<double>();
    k.cy = r.get<double>();
    k.width = r.get<std::uint32_t>();
    k.height = r.get<std::uint32_t>();
    const double qw = r.get<double>(), qx = r.get<double>(), qy = r.get<double>(), qz = r.get<double>();
    a.reference.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    for (int i = 0; i < 3; ++i) a.reference.pose.translation[i] = r.get<double>();
    if (r.remaining() != std::size_t(L) * (8 + hw * 8))
        throw FormatError("asset: payload is " + std::to_string(r.remaining()) + " bytes, header implies " + std::to_string(std::size_t(L) * (8 + hw * 8)));
    for (std::uint32_t l = 0; l < L; ++l) {
        MliAsset::Layer layer;
        layer.depth_far = r.get<float>();
        layer.depth_near = r.get<float>();
        layer.depth.resize(hw);
        for (auto& d : layer.depth) d = r.get<float>();
        auto px = r.get_bytes(hw * 4);
        layer.rgba.assign(px.begin(), px.end());
        a.layers.push_back(std::move(layer));
    }
    r.expect_end();
    validate_asset(a);
    return a;
}

inline std::uint8_t quantize_unit(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Quantizes textures to u8 and depth to f32. Depths may sit a rounding step
/// outside their group interval after resampling; those are pulled onto the
/// boundary, anything further out is an error.
template <std::floating_point T>
MliAsset to_asset(const MultiLayerImage<T>& mli) {
    const auto& st = mli.layers;
    const std::size_t L = st.layer_count(), h = st.height(), w = st.width();
    if (st.textures.rank() != 4 || st.textures.dim(1) != 4 || st.textures.dim(0) != L) throw ShapeError("to_asset: textures must be [L, 4, h, w]");
    MliAsset a;
    a.reference = st.reference;
    a.height = static_cast<std::uint32_t>(h);
    a.width = static_cast<std::uint32_t>(w);
    for (std::size_t l = 0; l < L; ++l) {
        MliAsset::Layer layer;
        const auto& g = st.groups.groups[l];
        layer.depth_far = static_cast<float>(g.depth_far);
        layer.depth_near = static_cast<float>(g.depth_near);
        layer.depth.resize(h * w);
        layer.rgba.resize(h * w * 4);
        for (std::size_t i = 0; i < h * w; ++i) {
            const double d = double(st.depth[l * h * w + i]);
            const double tol = 1e-5 * g.depth_far;
            if (d < g.depth_near - tol || d > g.depth_far + tol)
                throw std::invalid_argument("to_asset: layer " + std::to_string(l) + " depth " + std::to_string(d) + " outside its interval");
            layer.depth[i] = std::clamp(static_cast<float>(d), layer.depth_near, layer.depth_far);
            for (std::size_t c = 0; c < 4; ++c) layer.rgba[i * 4 + c] = quantize_unit(double(st.textures[((l * 4 + c) * h * w) + i]));
        }
        a.layers.push_back(std::move(layer));
    }
    validate_asset(a);
    return a;
}

template <std::floating_point T>
MultiLayerImage<T> from_asset(const MliAsset& a) {
    validate_asset(a);
    const std::size_t L = a.layers.size(), h = a.height, w = a.width;
    MultiLayerImage<T> mli;
    auto& st = mli.layers;
    st.reference = a.reference;
    st.textures = Tensor<T>(Shape{L, 4, h, w});
    st.depth = Tensor<T>(Shape{L, h, w});
    for (std::size_t l = 0; l < L; ++l) {
        const auto& layer = a.layers[l];
        st.groups.groups.push_back({l, l + 1, double(layer.depth_far), double(layer.depth_near)});
        for (std::size_t i = 0; i < h * w; ++i) {
            st.depth[l * h * w + i] = static_cast<T>(layer.depth[i]);
            for (std::size_t c = 0; c < 4; ++c) st.textures[(l * 4 + c) * h * w + i] = static_cast<T>(double(layer.rgba[i * 4 + c]) / 255.0);
        }
    }
    mli.range = {double(a.layers.back().depth_near), double(a.layers.front().depth_far)};
    return mli;
}

template <std::floating_point T>
void export_asset(const MultiLayerImage<T>& mli, const std::filesystem::path& path) {
    write_file_bytes(path, encode_asset(to_asset(mli)));
}

inline MliAsset import_asset(const std::filesystem::path& path) { return decode_asset(read_file_bytes(path)); }

}  // namespace simpli
