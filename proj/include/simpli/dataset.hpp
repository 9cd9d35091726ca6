#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "simpli/image_io.hpp"
#include "simpli/synthetic.hpp"

namespace simpli {

/// All views of one scene. images [K, 3, H, W].
template <std::floating_point T>
struct SceneViews {
    Tensor<T> images;
    std::vector<Camera> cameras;
    DepthRange range;

    std::size_t view_count() const { return cameras.size(); }

    /// Views `idx` in the given order as [n, 3, H, W].
    Tensor<T> select(const std::vector<std::size_t>& idx) const {
        const std::size_t n = images.numel() / std::max<std::size_t>(1, images.dim(0));
        Shape s = images.shape();
        s[0] = idx.size();
        Tensor<T> out(s);
        for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(images.data() + idx.at(i) * n, n, out.data() + i * n);
        return out;
    }

    /// One view as [3, H, W].
    Tensor<T> view(std::size_t i) const {
        Tensor<T> out(Shape{images.dim(1), images.dim(2), images.dim(3)});
        std::copy_n(images.data() + i * out.numel(), out.numel(), out.data());
        return out;
    }
};

/// Seeds at or above this value are reserved for held-out evaluation scenes.
inline constexpr std::uint64_t kHeldOutSeedBase = std::uint64_t{1} << 40;

template <std::floating_point T>
SceneViews<T> render_scene_views(const SyntheticScene& scene) {
    SceneViews<T> out;
    out.cameras = scene.cameras;
    out.range = scene.spec.range;
    const auto& c0 = scene.cameras.front();
    out.images = Tensor<T>(Shape{scene.cameras.size(), 3, c0.height(), c0.width()});
    const std::size_t n = 3 * c0.height() * c0.width();
    for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
        auto img = oracle_render<T>(scene.spec, scene.cameras[i]);
        if (img.numel() != n) throw ShapeError("render_scene_views: cameras differ in resolution");
        std::copy_n(img.data(), n, out.images.data() + i * n);
    }
    return out;
}

template <std::floating_point T>
class SceneProvider {
public:
    virtual ~SceneProvider() = default;
    /// Scene for an arbitrary 64-bit key; finite providers wrap around.
    virtual SceneViews<T> scene(std::uint64_t key) const = 0;
};

/// Scenes rendered on demand from generate_scene(key).
template <std::floating_point T>
class ProceduralScenes final : public SceneProvider<T> {
public:
    explicit ProceduralScenes(DatasetConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
    SceneViews<T> scene(std::uint64_t key) const override { return render_scene_views<T>(generate_scene(key, cfg_)); }
    const DatasetConfig& config() const { return cfg_; }

private:
    DatasetConfig cfg_;
};

// ---------------------------------------------------------------------------
// On-disk layout: <root>/dataset.json ({"range": [near, far], "scenes": [ids]}),
// <root>/scenes/<id>/cameras.json and <root>/scenes/<id>/view_###.png
// ---------------------------------------------------------------------------

inline std::string view_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%03zu.png", i);
    return buf;
}

template <std::floating_point T>
void write_scene_views(const std::filesystem::path& dir, const SceneViews<T>& views) {
    std::filesystem::create_directories(dir);
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : views.cameras) cams.push_back(camera_to_json(c));
    std::ofstream out(dir / "cameras.json");
    if (!(out << cams.dump(2) << '\n')) throw std::runtime_error("cannot write " + (dir / "cameras.json").string());
    for (std::size_t i = 0; i < views.view_count(); ++i) write_png(dir / view_file_name(i), views.view(i));
}

template <std::floating_point T>
SceneViews<T> read_scene_views(const std::filesystem::path& dir, DepthRange range) {
    std::ifstream in(dir / "cameras.json");
    if (!in) throw std::runtime_error("cannot open " + (dir / "cameras.json").string());
    const auto cams = nlohmann::json::parse(in);
    if (!cams.is_array() || cams.empty()) throw std::invalid_argument((dir / "cameras.json").string() + ": expected a non-empty list of cameras");
    SceneViews<T> out;
    out.range = range;
    for (const auto& j : cams) out.cameras.push_back(camera_from_json(j));
    const auto& c0 = out.cameras.front();
    out.images = Tensor<T>(Shape{out.cameras.size(), 3, c0.height(), c0.width()});
    const std::size_t n = 3 * c0.height() * c0.width();
    for (std::size_t i = 0; i < out.cameras.size(); ++i) {
        auto img = read_png<T>(dir / view_file_name(i));
        if (img.dim(1) != out.cameras[i].height() || img.dim(2) != out.cameras[i].width() || img.numel() != n)
            throw ShapeError((dir / view_file_name(i)).string() + ": resolution differs from its camera");
        std::copy_n(img.data(), n, out.images.data() + i * n);
    }
    return out;
}

/// Renders `count` procedural scenes with seeds first_seed, first_seed + 1, ...
inline std::vector<std::string> write_dataset(const std::filesystem::path& root, const DatasetConfig& cfg, std::uint64_t first_seed, std::size_t count) {
    cfg.validate();
    nlohmann::json meta{{"range", {cfg.range.near, cfg.range.far}}, {"scenes", nlohmann::json::array()}};
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = first_seed + i;
        const std::string id = "scene_" + std::to_string(seed);
        write_scene_views(root / "scenes" / id, render_scene_views<double>(generate_scene(seed, cfg)));
        meta["scenes"].push_back(id);
        ids.push_back(id);
    }
    std::ofstream out(root / "dataset.json");
    if (!(out << meta.dump(2) << '\n')) throw std::runtime_error("cannot write " + (root / "dataset.json").string());
    return ids;
}

/// Scenes loaded from a dataset directory, cached after first use.
template <std::floating_point T>
class DirectoryScenes final : public SceneProvider<T> {
public:
    explicit DirectoryScenes(std::filesystem::path root) : root_(std::move(root)) {
        std::ifstream in(root_ / "dataset.json");
        if (!in) throw std::runtime_error("cannot open " + (root_ / "dataset.json").string());
        const auto meta = nlohmann::json::parse(in);
        const auto r = meta.at("range").get<std::vector<double>>();
        if (r.size() != 2) throw std::invalid_argument("dataset.json: range must be [near, far]");
        range_ = {r[0], r[1]};
        range_.validate();
        ids_ = meta.at("scenes").get<std::vector<std::string>>();
        if (ids_.empty()) throw std::invalid_argument("dataset.json: no scenes");
    }

    SceneViews<T> scene(std::uint64_t key) const override {
        const auto& id = ids_[key % ids_.size()];
        std::lock_guard lock(mu_);
        auto it = cache_.find(id);
        if (it == cache_.end()) it = cache_.emplace(id, read_scene_views<T>(root_ / "scenes" / id, range_)).first;
        return it->second;
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

private:
    std::filesystem::path root_;
    DepthRange range_;
    std::vector<std::string> ids_;
    mutable std::mutex mu_;
    mutable std::map<std::string, SceneViews<T>> cache_;
};

}  // namespace simpli
