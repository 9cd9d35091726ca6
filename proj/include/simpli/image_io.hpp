#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "simpli/camera.hpp"
#include "simpli/tensor.hpp"

namespace simpli {

namespace detail {

/// Owns a libpng simplified-API control block.
class PngImage {
public:
    PngImage() {
        std::memset(&img_, 0, sizeof(img_));
        img_.version = PNG_IMAGE_VERSION;
    }
    ~PngImage() { png_image_free(&img_); }
    PngImage(const PngImage&) = delete;
    PngImage& operator=(const PngImage&) = delete;
    png_image* get() { return &img_; }
    png_image* operator->() { return &img_; }

private:
    png_image img_;
};

}  // namespace detail

/// 8-bit PNG of a [C, H, W] image in [0, 1], C in {1, 3, 4}.
template <std::floating_point T>
void write_png(const std::filesystem::path& path, const Tensor<T>& img) {
    if (img.rank() != 3) throw ShapeError("write_png: expected [C, H, W]");
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (C != 1 && C != 3 && C != 4) throw ShapeError("write_png: channel count must be 1, 3 or 4");
    std::vector<std::uint8_t> px(C * H * W);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H * W; ++i)
            px[i * C + c] = static_cast<std::uint8_t>(std::lround(std::clamp(double(img[c * H * W + i]), 0.0, 1.0) * 255.0));
    detail::PngImage png;
    png->width = static_cast<png_uint_32>(W);
    png->height = static_cast<png_uint_32>(H);
    png->format = C == 1 ? PNG_FORMAT_GRAY : C == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
    if (!png_image_write_to_file(png.get(), path.string().c_str(), 0, px.data(), 0, nullptr))
        throw std::runtime_error("write_png: cannot write " + path.string() + ": " + png->message);
}

/// 16-bit grayscale PNG of an [H, W] map in [0, 1].
template <std::floating_point T>
void write_png16(const std::filesystem::path& path, const Tensor<T>& map) {
    if (map.rank() != 2) throw ShapeError("write_png16: expected [H, W]");
    std::vector<std::uint16_t> px(map.numel());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint16_t>(std::lround(std::clamp(double(map[i]), 0.0, 1.0) * 65535.0));
    detail::PngImage png;
    png->width = static_cast<png_uint_32>(map.dim(1));
    png->height = static_cast<png_uint_32>(map.dim(0));
    png->format = PNG_FORMAT_LINEAR_Y;
    if (!png_image_write_to_file(png.get(), path.string().c_str(), 0, px.data(), 0, nullptr))
        throw std::runtime_error("write_png16: cannot write " + path.string() + ": " + png->message);
}

/// Any 8-bit PNG as a [3, H, W] RGB image in [0, 1].
template <std::floating_point T>
Tensor<T> read_png(const std::filesystem::path& path) {
    detail::PngImage png;
    if (!png_image_begin_read_from_file(png.get(), path.string().c_str()))
        throw std::runtime_error("read_png: cannot read " + path.string() + ": " + png->message);
    png->format = PNG_FORMAT_RGB;
    const std::size_t H = png->height, W = png->width;
    std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(*png.get()));
    if (!png_image_finish_read(png.get(), nullptr, px.data(), 0, nullptr))
        throw std::runtime_error("read_png: decoding " + path.string() + " failed: " + png->message);
    Tensor<T> out(Shape{3, H, W});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < H * W; ++i) out[c * H * W + i] = static_cast<T>(double(px[i * 3 + c]) / 255.0);
    return out;
}

/// {"fx","fy","cx","cy","width","height","rotation":[w,x,y,z],"translation":[x,y,z]}
inline nlohmann::json camera_to_json(const Camera& c) {
    const auto& k = c.intrinsics;
    const auto& q = c.pose.rotation;
    const auto& t = c.pose.translation;
    return {{"fx", k.fx},         {"fy", k.fy},
            {"cx", k.cx},         {"cy", k.cy},
            {"width", k.width},   {"height", k.height},
            {"rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {t.x(), t.y(), t.z()}}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
    try {
        Camera c;
        auto& k = c.intrinsics;
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.at("width").get<std::size_t>();
        k.height = j.at("height").get<std::size_t>();
        const auto q = j.at("rotation").get<std::vector<double>>();
        const auto t = j.at("translation").get<std::vector<double>>();
        if (q.size() != 4 || t.size() != 3) throw std::invalid_argument("camera json: rotation needs 4 and translation 3 values");
        c.pose.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
        c.pose.translation = {t[0], t[1], t[2]};
        k.validate();
        c.pose.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("camera json: ") + e.what());
    }
}

}  // namespace simpli
