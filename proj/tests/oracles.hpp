#pragma once

// Brute-force reference implementations used only by tests. They share no code
// with the library beyond the camera data types.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "simpli/camera.hpp"
#include "simpli/scene.hpp"

namespace simpli::oracle {

/// Bilinear lookup of channel `c` of a [C, H, W] buffer; taps outside the
/// image contribute zero.
inline double bilinear(const std::vector<double>& img, std::size_t C, std::size_t H, std::size_t W, std::size_t c, double x, double y) {
    (void)C;
    const double fx = std::floor(x), fy = std::floor(y);
    const double ax = x - fx, ay = y - fy;
    double acc = 0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const long xi = static_cast<long>(fx) + dx, yi = static_cast<long>(fy) + dy;
            if (xi < 0 || yi < 0 || xi >= long(W) || yi >= long(H)) continue;
            const double wgt = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
            acc += wgt * img[(c * H + std::size_t(yi)) * W + std::size_t(xi)];
        }
    // samples entirely outside [0, W-1] x [0, H-1] are defined as zero
    if (x < 0 || y < 0 || x > double(W - 1) || y > double(H - 1)) return 0.0;
    return acc;
}

struct Ray {
    Eigen::Vector3d origin, dir;
};

/// World-space ray through the center of pixel (x, y).
inline Ray pixel_ray(const Camera& cam, double x, double y) {
    const auto& k = cam.intrinsics;
    Eigen::Vector3d d_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
    return {cam.pose.translation, cam.pose.rotation.toRotationMatrix() * d_cam};
}

/// Intersection with the plane z = depth of `ref`'s frame; nullopt when the
/// plane is behind the ray origin or parallel.
inline std::optional<Eigen::Vector3d> hit_ref_plane(const Ray& r, const Camera& ref, double depth) {
    const Eigen::Vector3d n = ref.pose.rotation.toRotationMatrix().col(2);
    const double denom = n.dot(r.dir);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double t = (depth - n.dot(r.origin - ref.pose.translation)) / denom;
    if (t <= 0) return std::nullopt;
    return r.origin + t * r.dir;
}

/// Pixel of `cam` seeing world point p, by explicit frame change.
inline std::optional<Eigen::Vector2d> to_pixel(const Camera& cam, const Eigen::Vector3d& p) {
    const Eigen::Vector3d q = cam.pose.rotation.toRotationMatrix().transpose() * (p - cam.pose.translation);
    if (q.z() <= 1e-9) return std::nullopt;
    const auto& k = cam.intrinsics;
    return Eigen::Vector2d(k.fx * q.x() / q.z() + k.cx, k.fy * q.y() / q.z() + k.cy);
}

struct MeshHit {
    double t = 0;
    std::size_t tri = 0;
    double b0 = 0, b1 = 0, b2 = 0;  ///< barycentrics of the triangle's vertices
};

/// Nearest Moller-Trumbore hit over every triangle.
inline std::optional<MeshHit> cast(const LayerMesh& mesh, const Ray& r) {
    std::optional<MeshHit> best;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector3d& v0 = mesh.vertices[tri[0]];
        const Eigen::Vector3d e1 = mesh.vertices[tri[1]] - v0, e2 = mesh.vertices[tri[2]] - v0;
        const Eigen::Vector3d pv = r.dir.cross(e2);
        const double det = e1.dot(pv);
        if (std::abs(det) < 1e-14) continue;
        const double inv = 1.0 / det;
        const Eigen::Vector3d tv = r.origin - v0;
        const double u = tv.dot(pv) * inv;
        if (u < 0 || u > 1) continue;
        const Eigen::Vector3d qv = tv.cross(e1);
        const double v = r.dir.dot(qv) * inv;
        if (v < 0 || u + v > 1) continue;
        const double dist = e2.dot(qv) * inv;
        if (dist <= 0) continue;
        if (!best || dist < best->t) best = MeshHit{dist, t, 1 - u - v, u, v};
    }
    return best;
}

/// Texture coordinate (column, row) of a hit.
inline Eigen::Vector2d hit_uv(const LayerMesh& mesh, const MeshHit& h) {
    const auto& tri = mesh.triangles[h.tri];
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
    const double b[3] = {h.b0, h.b1, h.b2};
    for (int k = 0; k < 3; ++k) uv += b[k] * Eigen::Vector2d(double(tri[k] % mesh.width), double(tri[k] / mesh.width));
    return uv;
}

inline double min_bary(const MeshHit& h) { return std::min({h.b0, h.b1, h.b2}); }

/// Camera looking roughly down +z from near the origin.
inline Camera random_camera(std::mt19937_64& rng, std::size_t w, std::size_t h, double max_angle = 0.12, double max_shift = 0.3) {
    std::uniform_real_distribution<double> u(-1, 1);
    Camera c;
    c.intrinsics = {0.9 * double(w) * (1 + 0.1 * u(rng)), 0.9 * double(w) * (1 + 0.1 * u(rng)), 0.5 * double(w - 1) + u(rng),
                    0.5 * double(h - 1) + u(rng), w, h};
    Eigen::Vector3d axis(u(rng), u(rng), u(rng));
    c.pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(max_angle * u(rng), axis.normalized()));
    c.pose.translation = Eigen::Vector3d(max_shift * u(rng), max_shift * u(rng), 0.5 * max_shift * u(rng));
    return c;
}

}  // namespace simpli::oracle
