#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "simpli/tensor.hpp"

namespace simpli {

/// Pinhole intrinsics in pixels. Pixel (x, y) has its center at integer
/// coordinates; image y points down.
struct Intrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    std::size_t width = 2, height = 2;

    void validate() const {
        if (!(fx > 0 && fy > 0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
        if (width < 2 || height < 2) throw std::invalid_argument("intrinsics: width and height must be >= 2");
    }

    /// Same field of view at a new resolution.
    Intrinsics resized(std::size_t new_width, std::size_t new_height) const {
        const double sx = static_cast<double>(new_width) / static_cast<double>(width);
        const double sy = static_cast<double>(new_height) / static_cast<double>(height);
        return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5, new_width, new_height};
    }

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d k;
        k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
        return k;
    }

    bool operator==(const Intrinsics&) const = default;
};

/// Camera-to-world rigid transform. Camera axes: +x right, +y down, +z forward.
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    void validate() const {
        if (std::abs(rotation.norm() - 1.0) > 1e-9) throw std::invalid_argument("pose: quaternion is not unit length");
    }

    Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

    Eigen::Vector3d to_world(const Eigen::Vector3d& p_cam) const { return rotation * p_cam + translation; }
    Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const { return rotation.conjugate() * (p_world - translation); }
};

struct Camera {
    Intrinsics intrinsics;
    Pose pose;

    Camera resized(std::size_t w, std::size_t h) const { return {intrinsics.resized(w, h), pose}; }
    std::size_t width() const { return intrinsics.width; }
    std::size_t height() const { return intrinsics.height; }
    Eigen::Vector3d center() const { return pose.translation; }

    bool operator==(const Camera& o) const {
        return intrinsics == o.intrinsics && pose.rotation.coeffs() == o.pose.rotation.coeffs() && pose.translation == o.pose.translation;
    }
};

struct DepthRange {
    double near = 1.0;
    double far = 10.0;

    void validate() const {
        if (!(near > 0 && near < far)) throw std::invalid_argument("depth range: need 0 < near < far");
    }
};

/// P depths uniform in disparity, index 0 farthest.
inline std::vector<double> plane_depths(const DepthRange& range, std::size_t count) {
    range.validate();
    if (count < 2) throw std::invalid_argument("plane_depths: need at least 2 planes");
    std::vector<double> depths(count);
    const double d0 = 1.0 / range.far, d1 = 1.0 / range.near;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(count - 1);
        depths[k] = 1.0 / (d0 + t * (d1 - d0));
    }
    depths.front() = range.far;
    depths.back() = range.near;
    return depths;
}

struct Projection {
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double depth = 0.0;
    bool valid = false;  ///< false when the point is at or behind the camera plane
};

inline constexpr double kMinDepth = 1e-9;

inline Projection project(const Camera& cam, const Eigen::Vector3d& point_world) {
    const Eigen::Vector3d p = cam.pose.to_camera(point_world);
    Projection out;
    out.depth = p.z();
    if (p.z() <= kMinDepth) return out;
    const auto& k = cam.intrinsics;
    out.pixel = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
    out.valid = true;
    return out;
}

inline Eigen::Vector3d unproject_to_camera(const Intrinsics& k, const Eigen::Vector2d& pixel, double depth) {
    return {(pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth};
}

inline Eigen::Vector3d unproject(const Camera& cam, const Eigen::Vector2d& pixel, double depth) {
    if (!(depth > 0)) throw std::invalid_argument("unproject: depth must be positive");
    return cam.pose.to_world(unproject_to_camera(cam.intrinsics, pixel, depth));
}

/// Virtual camera: principal eigenvector of sum(q q^T) for rotation (sign
/// chosen in the first camera's hemisphere); mean translation and intrinsics.
inline Camera reference_camera(const std::vector<Camera>& cameras) {
    if (cameras.empty()) throw std::invalid_argument("reference_camera: no cameras");
    const std::size_t w = cameras.front().width(), h = cameras.front().height();
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    Intrinsics k{0, 0, 0, 0, w, h};
    for (const auto& c : cameras) {
        if (c.width() != w || c.height() != h) throw std::invalid_argument("reference_camera: resolution mismatch");
        Eigen::Vector4d q = c.pose.rotation.normalized().coeffs();  // x y z w
        acc += q * q.transpose();
        t += c.pose.translation;
        k.fx += c.intrinsics.fx;
        k.fy += c.intrinsics.fy;
        k.cx += c.intrinsics.cx;
        k.cy += c.intrinsics.cy;
    }
    const double n = static_cast<double>(cameras.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> solver(acc);
    Eigen::Vector4d q = solver.eigenvectors().col(3);
    if (q.dot(cameras.front().pose.rotation.coeffs()) < 0) q = -q;
    Camera ref;
    ref.pose.rotation = Eigen::Quaterniond(q[3], q[0], q[1], q[2]).normalized();
    ref.pose.translation = t / n;
    ref.intrinsics = {k.fx / n, k.fy / n, k.cx / n, k.cy / n, w, h};
    return ref;
}

/// Homography taking `ref` pixels on the fronto-parallel plane z_ref = depth to
/// `src` pixels: K_src (R + t n^T / d) K_ref^-1 with (R, t) the ref-to-src motion.
inline Eigen::Matrix3d plane_homography(const Camera& src, const Camera& ref, double depth) {
    if (!(depth > 0)) throw std::invalid_argument("plane_homography: depth must be positive");
    const Eigen::Matrix3d r_src = src.pose.rotation_matrix();
    const Eigen::Matrix3d r_ref = ref.pose.rotation_matrix();
    const Eigen::Matrix3d r = r_src.transpose() * r_ref;
    const Eigen::Vector3d t = r_src.transpose() * (ref.pose.translation - src.pose.translation);
    const Eigen::Vector3d n(0, 0, 1);
    return src.intrinsics.matrix() * (r + t * n.transpose() / depth) * ref.intrinsics.matrix().inverse();
}

/// Per-pixel coordinates (x, y) with validity; row-major over the source grid.
struct PixelMap {
    std::size_t height = 0, width = 0;
    std::vector<Eigen::Vector2d> coords;
    std::vector<unsigned char> valid;

    /// Sampling coordinates [h, w, 2]; invalid entries are pushed far outside
    /// the image so bilinear sampling yields zero.
    template <std::floating_point T>
    Tensor<T> to_tensor() const {
        Tensor<T> t(Shape{height, width, 2});
        for (std::size_t i = 0; i < coords.size(); ++i) {
            t[2 * i] = valid[i] ? static_cast<T>(coords[i].x()) : T(-1e6);
            t[2 * i + 1] = valid[i] ? static_cast<T>(coords[i].y()) : T(-1e6);
        }
        return t;
    }
};

namespace detail {
/// Removes last-ulp noise so identity warps sample texel centers exactly.
inline double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

inline PixelMap apply_homography(const Eigen::Matrix3d& hm, std::size_t h, std::size_t w) {
    PixelMap m;
    m.height = h;
    m.width = w;
    m.coords.resize(h * w);
    m.valid.resize(h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const Eigen::Vector3d q = hm * Eigen::Vector3d(static_cast<double>(x), static_cast<double>(y), 1.0);
            const std::size_t i = y * w + x;
            if (q.z() <= 1e-12) {
                m.valid[i] = 0;
                continue;
            }
            m.coords[i] = {snap(q.x() / q.z()), snap(q.y() / q.z())};
            m.valid[i] = std::isfinite(m.coords[i].x()) && std::isfinite(m.coords[i].y());
        }
    return m;
}
}  // namespace detail

/// For every pixel of `ref` (at its own resolution): the `src` pixel that sees
/// the point on the plane z_ref = depth. Invalid where the point is behind src.
inline PixelMap plane_point_transform(const Camera& src, const Camera& ref, double depth) {
    if (!(depth > 0)) throw std::invalid_argument("plane_point_transform: depth must be positive");
    if (src == ref) {
        PixelMap m;
        m.height = ref.height();
        m.width = ref.width();
        m.coords.resize(m.height * m.width);
        m.valid.assign(m.height * m.width, 1);
        for (std::size_t y = 0; y < m.height; ++y)
            for (std::size_t x = 0; x < m.width; ++x) m.coords[y * m.width + x] = {double(x), double(y)};
        return m;
    }
    return detail::apply_homography(plane_homography(src, ref, depth), ref.height(), ref.width());
}

/// Inverse direction: for every pixel of `target`, where its ray meets the plane
/// z_ref = depth, expressed in `ref` pixels. Used to inverse-warp plane textures.
inline PixelMap plane_inverse_transform(const Camera& target, const Camera& ref, double depth) {
    if (target == ref) return plane_point_transform(ref, ref, depth);
    const Eigen::Matrix3d hm = plane_homography(target, ref, depth).inverse();
    return detail::apply_homography(hm, target.height(), target.width());
}

}  // namespace simpli
