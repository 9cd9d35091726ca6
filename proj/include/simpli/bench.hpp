#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "simpli/asset.hpp"
#include "simpli/pipeline.hpp"

namespace simpli {

struct MachineInfo {
    std::string cpu;
    std::size_t hardware_threads = 0;
    std::size_t worker_threads = 0;
    std::string compiler;
};

inline MachineInfo machine_info() {
    MachineInfo m;
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);)
        if (line.rfind("model name", 0) == 0) {
            m.cpu = line.substr(line.find(':') + 2);
            break;
        }
    if (m.cpu.empty()) m.cpu = "unknown";
    m.hardware_threads = std::thread::hardware_concurrency();
    m.worker_threads = thread_count();
#if defined(__clang__)
    m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    m.compiler = "gcc " __VERSION__;
#else
    m.compiler = "unknown";
#endif
    return m;
}

/// Median wall-clock seconds of `reps` calls after one warm-up call.
template <typename Fn>
double median_seconds(std::size_t reps, Fn&& fn) {
    if (reps == 0) throw std::invalid_argument("benchmark: repetitions must be >= 1");
    fn();
    std::vector<double> s;
    for (std::size_t i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::ranges::sort(s);
    return reps % 2 ? s[reps / 2] : 0.5 * (s[reps / 2 - 1] + s[reps / 2]);
}

struct RenderTiming {
    std::string label;
    std::size_t surfaces = 0;  ///< layers or planes
    double median_seconds = 0;
    std::size_t texture_bytes = 0;

    double fps() const { return median_seconds > 0 ? 1.0 / median_seconds : 0.0; }
};

struct BenchReport {
    MachineInfo machine;
    std::size_t height = 0, width = 0, repetitions = 0;
    double build_seconds = -1;  ///< negative when not built from views
    std::size_t parameter_count = 0;
    std::size_t asset_bytes = 0;
    std::vector<RenderTiming> renders;

    const RenderTiming& render(const std::string& label) const {
        for (const auto& r : renders)
            if (r.label == label) return r;
        throw std::out_of_range("benchmark report: no render '" + label + "'");
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"machine",
                          {{"cpu", machine.cpu},
                           {"hardware_threads", machine.hardware_threads},
                           {"worker_threads", machine.worker_threads},
                           {"compiler", machine.compiler}}},
                         {"height", height},
                         {"width", width},
                         {"repetitions", repetitions},
                         {"parameter_count", parameter_count},
                         {"asset_bytes", asset_bytes}};
        j["build_seconds"] = build_seconds >= 0 ? nlohmann::json(build_seconds) : nlohmann::json(nullptr);
        j["render"] = nlohmann::json::array();
        for (const auto& r : renders)
            j["render"].push_back({{"label", r.label},
                                   {"surfaces", r.surfaces},
                                   {"median_seconds", r.median_seconds},
                                   {"fps", r.fps()},
                                   {"texture_bytes", r.texture_bytes}});
        return j;
    }
};

/// Render time of an MLI at `camera`. texture_bytes counts f32 RGBA.
template <std::floating_point T>
RenderTiming time_mli_render(const MultiLayerImage<T>& mli, const Camera& camera, std::size_t reps, std::string label) {
    NoGradScope<T> no_grad;
    const auto meshes = mli.layers.meshes();
    RenderTiming r{std::move(label), mli.layers.layer_count(), 0, mli.layers.textures.numel() * sizeof(float)};
    r.median_seconds = median_seconds(reps, [&] { (void)render_layer_stack(mli.layers, meshes, camera); });
    return r;
}

template <std::floating_point T>
RenderTiming time_mpi_render(const PlaneStack<T>& mpi, const Camera& camera, std::size_t reps, std::string label) {
    NoGradScope<T> no_grad;
    RenderTiming r{std::move(label), mpi.plane_count(), 0, mpi.textures.numel() * sizeof(float)};
    r.median_seconds = median_seconds(reps, [&] { (void)render_plane_stack(mpi, camera); });
    return r;
}

/// Full-resolution RGBA plane stack decoded from a build's fmpi1 stage.
template <std::floating_point T>
PlaneStack<T> mpi_from_build(const nn::StageRegistry<T>& model, const BuildResult<T>& built, const PipelineConfig& cfg) {
    NoGradScope<T> no_grad;
    const Tensor<T>* fmpi1 = nullptr;
    for (const auto& e : built.trace.entries)
        if (e.name == "fmpi1") fmpi1 = &e.textures;
    if (fmpi1 == nullptr) throw std::invalid_argument("mpi_from_build: trace has no fmpi1 stage");
    PlaneStack<T> mpi;
    mpi.range = built.mli.range;
    mpi.depths = plane_depths(mpi.range, cfg.planes);
    mpi.reference = built.mli.layers.reference;
    mpi.textures = resize_bilinear(model.mpi_decoder(*fmpi1), cfg.height, cfg.width);
    return mpi;
}

}  // namespace simpli
