#pragma once

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "simpli/image_io.hpp"
#include "simpli/parallel.hpp"
#include "simpli/pipeline.hpp"

namespace simpli {

enum class TrajectoryKind { orbit, spiral };

/// Camera path around a reference pose. Frame 0 is always the reference.
///  orbit: the camera turns about the scene center (a point focus_depth in
///         front of the reference) by yaw = angle*sin(th), pitch = angle/2*sin(2th).
///  spiral: translation x,y = radius*sin(th/2)*(cos, sin)(turns*th),
///          z = forward*sin(th); orientation stays fixed.
/// th = 2*pi*k/frames.
struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::orbit;
    std::size_t frames = 30;
    double angle = 0.05;       ///< orbit amplitude, radians
    double radius = 0.15;      ///< spiral amplitude, world units
    double forward = 0.3;      ///< spiral forward/backward amplitude
    double turns = 2;          ///< spiral revolutions over the path
    double focus_depth = 0;    ///< orbit center depth; 0 = geometric mean of the range

    void validate() const {
        if (frames < 1) throw std::invalid_argument("trajectory: frame count must be >= 1");
        if (!(angle >= 0 && radius >= 0 && focus_depth >= 0)) throw std::invalid_argument("trajectory: amplitudes must be non-negative");
    }
};

inline TrajectoryKind parse_trajectory_kind(const std::string& s) {
    if (s == "orbit") return TrajectoryKind::orbit;
    if (s == "spiral") return TrajectoryKind::spiral;
    throw std::invalid_argument("trajectory kind must be 'orbit' or 'spiral', got '" + s + "'");
}

inline std::vector<Camera> trajectory_cameras(const Camera& reference, const DepthRange& range, const TrajectorySpec& spec) {
    spec.validate();
    const double focus = spec.focus_depth > 0 ? spec.focus_depth : std::sqrt(range.near * range.far);
    const Eigen::Matrix3d R = reference.pose.rotation_matrix();
    const Eigen::Vector3d center = reference.pose.to_world({0, 0, focus});
    std::vector<Camera> out;
    for (std::size_t k = 0; k < spec.frames; ++k) {
        const double th = 2 * std::numbers::pi * double(k) / double(spec.frames);
        Camera c = reference;
        if (spec.kind == TrajectoryKind::orbit) {
            const double yaw = spec.angle * std::sin(th), pitch = 0.5 * spec.angle * std::sin(2 * th);
            const Eigen::Quaterniond turn = Eigen::AngleAxisd(yaw, R.col(1)) * Eigen::AngleAxisd(pitch, R.col(0));
            c.pose.rotation = (turn * reference.pose.rotation).normalized();
            c.pose.translation = center + turn * (reference.pose.translation - center);
        } else {
            const double rho = spec.radius * std::sin(th / 2);
            const Eigen::Vector3d offset(rho * std::cos(spec.turns * th), rho * std::sin(spec.turns * th), spec.forward * std::sin(th));
            c.pose.translation = reference.pose.translation + R * offset;
        }
        out.push_back(c);
    }
    return out;
}

inline std::string frame_file_name(const char* prefix, std::size_t i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s_%04zu.png", prefix, i);
    return buf;
}

/// Inverse depth scaled to [0, 1] over the range; 0 where nothing was drawn.
template <std::floating_point T>
Tensor<T> depth_to_unit(const Tensor<T>& depth, const DepthRange& range) {
    Tensor<T> out(depth.shape());
    const double lo = 1 / range.far, hi = 1 / range.near;
    for (std::size_t i = 0; i < depth.numel(); ++i) {
        const double d = double(depth[i]);
        out[i] = d > 0 ? static_cast<T>(std::clamp((1 / d - lo) / (hi - lo), 0.0, 1.0)) : T(0);
    }
    return out;
}

/// FNV-1a over the 8-bit quantized RGB values of a [3, H, W] frame.
template <std::floating_point T>
std::uint64_t frame_hash(const Tensor<T>& rgb, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (std::size_t i = 0; i < rgb.numel(); ++i) {
        h ^= std::lround(std::clamp(double(rgb[i]), 0.0, 1.0) * 255.0);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct TrajectoryResult {
    std::vector<std::filesystem::path> frames, depth_frames;
    std::uint64_t hash = 0;  ///< frame_hash chained over all frames in order
};

/// Renders frame_####.png (and depth_####.png, 16-bit inverse depth) into out_dir.
template <std::floating_point T>
TrajectoryResult render_trajectory(const MultiLayerImage<T>& mli, const TrajectorySpec& spec, const std::filesystem::path& out_dir,
                                   bool write_depth = false) {
    const auto cams = trajectory_cameras(mli.layers.reference, mli.range, spec);
    std::filesystem::create_directories(out_dir);
    std::vector<Tensor<T>> frames(cams.size());
    std::vector<std::exception_ptr> errors(cams.size());
    parallel_for(0, cams.size(), [&](std::size_t k) {
        try {
            auto r = mli.render(cams[k]);
            write_png(out_dir / frame_file_name("frame", k), r.channels);
            if (write_depth) write_png16(out_dir / frame_file_name("depth", k), depth_to_unit(r.depth, mli.range));
            frames[k] = r.channels;
        } catch (...) {
            errors[k] = std::current_exception();
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    TrajectoryResult res;
    res.hash = 0xcbf29ce484222325ULL;
    for (std::size_t k = 0; k < cams.size(); ++k) {
        res.hash = frame_hash(frames[k], res.hash);
        res.frames.push_back(out_dir / frame_file_name("frame", k));
        if (write_depth) res.depth_frames.push_back(out_dir / frame_file_name("depth", k));
    }
    return res;
}

}  // namespace simpli
