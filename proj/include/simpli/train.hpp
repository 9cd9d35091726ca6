#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "simpli/checkpoint.hpp"
#include "simpli/dataset.hpp"
#include "simpli/loss.hpp"
#include "simpli/metrics.hpp"
#include "simpli/optim.hpp"
#include "simpli/pipeline.hpp"

namespace simpli {

struct TrainConfig {
    std::size_t steps = 20000;  ///< T
    double learning_rate = 1e-4;
    std::size_t min_views = 2, max_views = 4;
    std::size_t novel_views = 1;  ///< N
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    LossWeights weights;
    std::size_t checkpoint_every = 1000;  ///< 0: only at the end

    void validate() const {
        if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
        if (novel_views < 1) throw std::invalid_argument("train config: novel view count must be >= 1");
        if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
        if (min_views < 2 || max_views < min_views) throw std::invalid_argument("train config: need 2 <= min_views <= max_views");
        if (!(learning_rate > 0)) throw std::invalid_argument("train config: learning rate must be positive");
        weights.validate();
    }
};

/// V posed sources plus N held-out targets drawn from one scene.
template <std::floating_point T>
struct TrainingSample {
    SceneInputs<T> sources;
    Tensor<T> novel_images;  ///< [N, 3, H, W]
    std::vector<Camera> novel_cameras;
};

/// Novel views are order[0, N), sources order[N, N + V).
template <std::floating_point T>
TrainingSample<T> make_sample(const SceneViews<T>& scene, const std::vector<std::size_t>& order, std::size_t V, std::size_t N) {
    if (order.size() < V + N) throw std::invalid_argument("make_sample: scene has " + std::to_string(order.size()) + " views, need " + std::to_string(V + N));
    TrainingSample<T> s;
    std::vector<std::size_t> novel(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(N));
    std::vector<std::size_t> src(order.begin() + static_cast<std::ptrdiff_t>(N), order.begin() + static_cast<std::ptrdiff_t>(N + V));
    s.sources.images = scene.select(src);
    for (auto i : src) s.sources.cameras.push_back(scene.cameras[i]);
    s.sources.range = scene.range;
    s.novel_images = scene.select(novel);
    for (auto i : novel) s.novel_cameras.push_back(scene.cameras[i]);
    return s;
}

inline std::vector<std::size_t> shuffled_views(std::size_t K, std::mt19937_64& rng) {
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = K; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    return order;
}

/// Renders every novel camera of a built representation as [N, 3, H, W].
template <std::floating_point T>
Tensor<T> render_novel_views(const MultiLayerImage<T>& mli, const std::vector<Camera>& cameras) {
    std::vector<Tensor<T>> parts;
    for (const auto& c : cameras) {
        auto r = mli.render(c).channels;
        parts.push_back(reshape(r, Shape{1, r.dim(0), r.dim(1), r.dim(2)}));
    }
    return parts.size() == 1 ? parts.front() : concat(parts, 0);
}

template <std::floating_point T>
LossTerms<T> sample_loss(const nn::StageRegistry<T>& model, const PipelineConfig& cfg, const TrainingSample<T>& s, const LossWeights& w) {
    auto built = build_scene_representation(model, s.sources, cfg);
    return loss_total(render_novel_views(built.mli, s.novel_cameras), s.novel_images, built.mli.layers.depth, w);
}

struct TrainLogEntry {
    std::size_t step = 0;
    double loss = 0, l1 = 0, perceptual = 0, tv = 0, learning_rate = 0;
    std::size_t views = 0;
    double seconds = 0;
};

struct TrainResult {
    std::size_t steps_completed = 0;
    bool diverged = false;
    std::string divergence_message;
    std::vector<double> losses;
};

struct TrainHooks {
    std::function<void(const TrainLogEntry&)> on_step;
    std::function<void(std::size_t steps_done)> on_checkpoint;
};

/// Adam + cosine schedule over cfg.steps steps. Scene keys are drawn below
/// kHeldOutSeedBase so evaluation scenes are never trained on. With a
/// checkpoint path, the store is saved periodically; when a loss or gradient
/// goes non-finite the run stops and the store is restored from the last
/// good checkpoint.
template <std::floating_point T>
TrainResult train(nn::StageRegistry<T>& model, const PipelineConfig& pcfg, const TrainConfig& cfg, const SceneProvider<T>& scenes,
                  const std::filesystem::path& checkpoint_path = {}, const TrainHooks& hooks = {}) {
    cfg.validate();
    pcfg.validate();
    set_deterministic(pcfg.deterministic);
    Adam<T> adam(model.store, {.learning_rate = cfg.learning_rate});
    std::mt19937_64 rng(cfg.seed ^ 0x5eed5eed5eedULL);
    TrainResult result;
    const bool saving = !checkpoint_path.empty();
    if (saving) save_checkpoint(checkpoint_path, model.store);

    for (std::size_t t = 0; t < cfg.steps; ++t) {
        const auto start = std::chrono::steady_clock::now();
        model.store.zero_grad();
        TrainLogEntry log;
        log.step = t;
        try {
            for (std::size_t b = 0; b < cfg.batch; ++b) {
                const auto views = scenes.scene(rng() % kHeldOutSeedBase);
                const std::size_t V = cfg.min_views + rng() % (cfg.max_views - cfg.min_views + 1);
                const auto sample = make_sample(views, shuffled_views(views.view_count(), rng), V, cfg.novel_views);
                Tape<T> tape;
                auto terms = sample_loss(model, pcfg, sample, cfg.weights);
                auto total = scale(terms.total, 1.0 / double(cfg.batch));
                backward(total);
                const double inv = 1.0 / double(cfg.batch);
                log.loss += terms.value() * inv;
                log.l1 += terms.l1 * inv;
                log.perceptual += terms.perceptual * inv;
                log.tv += terms.tv * inv;
                log.views = V;
            }
            for (const auto& [name, p] : model.store.items())
                for (T g : p.grad())
                    if (!std::isfinite(g)) throw NumericError("gradient of '" + name + "' is not finite");
        } catch (const NumericError& e) {
            result.diverged = true;
            result.divergence_message = "step " + std::to_string(t) + ": " + e.what();
            if (saving) load_checkpoint(checkpoint_path, model.store);
            break;
        }
        log.learning_rate = cosine_lr(cfg.learning_rate, t, cfg.steps);
        adam.step(t, cfg.steps);
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.losses.push_back(log.loss);
        result.steps_completed = t + 1;
        if (hooks.on_step) hooks.on_step(log);
        const bool last = t + 1 == cfg.steps;
        if (last || (cfg.checkpoint_every > 0 && (t + 1) % cfg.checkpoint_every == 0)) {
            if (saving) save_checkpoint(checkpoint_path, model.store);
            if (hooks.on_checkpoint) hooks.on_checkpoint(t + 1);
        }
    }
    return result;
}

/// Mean of a window of losses ending at `end` (exclusive).
inline double smoothed(const std::vector<double>& xs, std::size_t end, std::size_t window) {
    end = std::min(end, xs.size());
    const std::size_t begin = end > window ? end - window : 0;
    if (begin == end) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(xs.begin() + static_cast<std::ptrdiff_t>(begin), xs.begin() + static_cast<std::ptrdiff_t>(end), 0.0) / double(end - begin);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalConfig {
    std::size_t scenes = 10;
    std::uint64_t first_seed = kHeldOutSeedBase;
    std::vector<std::size_t> view_counts{2, 3, 4};
    std::size_t novel_views = 1;
};

struct EvalRecord {
    std::uint64_t scene = 0;
    std::size_t views = 0;
    ImageMetrics model, baseline;
};

inline constexpr const char* kReportNote =
    "perceptual term is a multi-scale image-gradient L1 proxy, not a pretrained-feature loss; metrics on central crops keeping 90% of the area";

struct MetricSummary {
    MeanStd psnr, ssim;
};

struct MetricsReport {
    std::vector<EvalRecord> records;

    /// views == 0 summarizes all records.
    std::pair<MetricSummary, MetricSummary> summary(std::size_t views = 0) const {
        std::vector<double> mp, ms, bp, bs;
        for (const auto& r : records)
            if (views == 0 || r.views == views) {
                mp.push_back(r.model.psnr);
                ms.push_back(r.model.ssim);
                bp.push_back(r.baseline.psnr);
                bs.push_back(r.baseline.ssim);
            }
        return {{mean_std(mp), mean_std(ms)}, {mean_std(bp), mean_std(bs)}};
    }

    std::vector<std::size_t> view_counts() const {
        std::vector<std::size_t> v;
        for (const auto& r : records)
            if (std::ranges::find(v, r.views) == v.end()) v.push_back(r.views);
        std::ranges::sort(v);
        return v;
    }

    /// Header line, one line per record, then one summary line per V and overall.
    std::string jsonl() const {
        std::ostringstream os;
        os << nlohmann::json{{"type", "header"}, {"note", kReportNote}}.dump() << '\n';
        for (const auto& r : records)
            os << nlohmann::json{{"type", "record"},         {"scene", r.scene},           {"views", r.views},
                                 {"psnr", r.model.psnr},     {"ssim", r.model.ssim},       {"baseline_psnr", r.baseline.psnr},
                                 {"baseline_ssim", r.baseline.ssim}}
                      .dump()
               << '\n';
        auto line = [&](std::size_t v) {
            auto [m, b] = summary(v);
            nlohmann::json j{{"type", "summary"},          {"psnr_mean", m.psnr.mean},          {"psnr_std", m.psnr.std},
                             {"ssim_mean", m.ssim.mean},   {"ssim_std", m.ssim.std},            {"baseline_psnr_mean", b.psnr.mean},
                             {"baseline_psnr_std", b.psnr.std}, {"baseline_ssim_mean", b.ssim.mean}, {"baseline_ssim_std", b.ssim.std},
                             {"count", m.psnr.count}};
            if (v == 0) j["views"] = "all"; else j["views"] = v;
            os << j.dump() << '\n';
        };
        for (auto v : view_counts()) line(v);
        line(0);
        return os.str();
    }
};

/// Index of the source whose camera center is closest to `novel`.
inline std::size_t nearest_source(const std::vector<Camera>& sources, const Camera& novel) {
    std::size_t best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const double di = (sources[i].center() - novel.center()).norm();
        if (di < d) {
            d = di;
            best = i;
        }
    }
    return best;
}

/// Scenes first_seed, first_seed + 1, ... Per scene, one view order is
/// drawn; the novel views are shared across V and the source sets are
/// nested, so per-V results are paired.
template <std::floating_point T>
MetricsReport evaluate(const nn::StageRegistry<T>& model, const PipelineConfig& pcfg, const SceneProvider<T>& scenes, const EvalConfig& cfg) {
    pcfg.validate();
    set_deterministic(pcfg.deterministic);
    NoGradScope<T> no_grad;
    MetricsReport report;
    for (std::size_t i = 0; i < cfg.scenes; ++i) {
        const std::uint64_t key = cfg.first_seed + i;
        const auto views = scenes.scene(key);
        std::mt19937_64 rng(key);
        const auto order = shuffled_views(views.view_count(), rng);
        for (std::size_t V : cfg.view_counts) {
            const auto sample = make_sample(views, order, V, cfg.novel_views);
            auto built = build_scene_representation(model, sample.sources, pcfg);
            for (std::size_t n = 0; n < cfg.novel_views; ++n) {
                const auto& cam = sample.novel_cameras[n];
                auto pred = built.mli.render(cam).channels;
                const Tensor<T> gt = views.view(order[n]);
                const Tensor<T> base = views.view(order[cfg.novel_views + nearest_source(sample.sources.cameras, cam)]);
                report.records.push_back({key, V, compute_metrics(pred, gt), compute_metrics(base, gt)});
            }
        }
    }
    return report;
}

}  // namespace simpli
