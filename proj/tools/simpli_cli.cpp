// simpli command line: dataset generation, training, evaluation, asset
// building, trajectory rendering, benchmarking and file inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "simpli/asset.hpp"
#include "simpli/bench.hpp"
#include "simpli/checkpoint.hpp"
#include "simpli/config.hpp"
#include "simpli/trajectory.hpp"

namespace fs = std::filesystem;
using namespace simpli;
using Real = float;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    std::string out;

    RunConfig load() const {
        RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (seed) c.train.seed = *seed;
        if (deterministic) c.pipeline.deterministic = true;
        set_deterministic(c.pipeline.deterministic);
        return c;
    }
};

void add_common(CLI::App* app, Common& c, bool out_required) {
    app->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "Seed (overrides the configuration)");
    app->add_flag("--deterministic", c.deterministic, "Single-threaded, bit-reproducible execution");
    auto* o = app->add_option("--out", c.out, "Output path");
    if (out_required) o->required();
}

std::unique_ptr<SceneProvider<Real>> scene_source(const std::string& data_dir, const DatasetConfig& cfg) {
    if (data_dir.empty()) return std::make_unique<ProceduralScenes<Real>>(cfg);
    return std::make_unique<DirectoryScenes<Real>>(data_dir);
}

std::unique_ptr<nn::StageRegistry<Real>> load_model(const RunConfig& c, const std::string& checkpoint) {
    auto model = std::make_unique<nn::StageRegistry<Real>>(c.pipeline.dims(), c.train.seed);
    if (!checkpoint.empty()) load_checkpoint(checkpoint, model->store);
    return model;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!(out << text)) throw std::runtime_error("cannot write " + path.string());
}

/// First `count` views (all when 0) of a directory scene or a procedural one.
SceneInputs<Real> load_views(const RunConfig& c, const std::string& views_dir, std::uint64_t scene_seed, std::size_t count) {
    const auto all = views_dir.empty() ? render_scene_views<Real>(generate_scene(scene_seed, c.dataset))
                                       : read_scene_views<Real>(views_dir, c.dataset.range);
    if (count == 0) count = views_dir.empty() ? c.train.max_views : all.view_count();
    if (count < 2 || count > all.view_count())
        throw std::invalid_argument("need between 2 and " + std::to_string(all.view_count()) + " source views, got " + std::to_string(count));
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    SceneInputs<Real> in{all.select(idx), {all.cameras.begin(), all.cameras.begin() + long(count)}, all.range};
    in.validate(c.pipeline);
    return in;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& co, std::size_t count, bool held_out) {
    const auto c = co.load();
    c.dataset.validate();
    const std::uint64_t first = (held_out ? kHeldOutSeedBase : 0) + c.train.seed;
    const auto ids = write_dataset(co.out, c.dataset, first, count);
    std::printf("wrote %zu scenes to %s\n", ids.size(), co.out.c_str());
    return 0;
}

int cmd_train(const Common& co, const std::string& data, std::optional<std::size_t> steps) {
    auto c = co.load();
    if (steps) c.train.steps = *steps;
    c.validate();
    const fs::path out = co.out;
    fs::create_directories(out);
    write_text(out / "config.json", to_json(c).dump(2) + "\n");
    auto scenes = scene_source(data, c.dataset);
    auto model = load_model(c, {});
    std::ofstream log(out / "train_log.jsonl");
    TrainHooks hooks;
    hooks.on_step = [&](const TrainLogEntry& e) {
        log << nlohmann::json{{"step", e.step},     {"loss", e.loss},    {"l1", e.l1},     {"perceptual", e.perceptual},
                              {"tv", e.tv},         {"lr", e.learning_rate}, {"views", e.views}, {"seconds", e.seconds}}
                   .dump()
            << '\n';
        if ((e.step + 1) % 100 == 0) std::printf("step %zu loss %.5f\n", e.step + 1, e.loss);
    };
    hooks.on_checkpoint = [&](std::size_t done) {
        log.flush();
        std::printf("checkpoint after %zu steps\n", done);
    };
    const auto result = train(*model, c.pipeline, c.train, *scenes, out / "model.smpc", hooks);
    if (result.diverged) {
        std::fprintf(stderr, "training diverged (%s); model.smpc holds the last good checkpoint\n", result.divergence_message.c_str());
        return 2;
    }
    std::printf("trained %zu steps, final smoothed loss %.5f\n", result.steps_completed,
                smoothed(result.losses, result.losses.size(), std::min<std::size_t>(100, result.losses.size())));
    return 0;
}

int cmd_eval(const Common& co, const std::string& checkpoint, const std::string& data) {
    const auto c = co.load();
    c.validate();
    auto model = load_model(c, checkpoint);
    auto scenes = scene_source(data, c.dataset);
    const auto report = evaluate(*model, c.pipeline, *scenes, c.eval);
    const std::string text = report.jsonl();
    if (co.out.empty()) std::cout << text;
    else write_text(co.out, text);
    for (auto v : report.view_counts()) {
        auto [m, b] = report.summary(v);
        std::fprintf(stderr, "V=%zu  psnr %.2f +- %.2f (baseline %.2f)  ssim %.3f (baseline %.3f)\n", v, m.psnr.mean, m.psnr.std, b.psnr.mean,
                     m.ssim.mean, b.ssim.mean);
    }
    return 0;
}

int cmd_build(const Common& co, const std::string& checkpoint, const std::string& views, std::uint64_t scene, std::size_t count) {
    const auto c = co.load();
    c.pipeline.validate();
    auto model = load_model(c, checkpoint);
    const auto in = load_views(c, views, scene, count);
    NoGradScope<Real> no_grad;
    const auto t0 = std::chrono::steady_clock::now();
    const auto built = build_scene_representation(*model, in, c.pipeline);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    export_asset(built.mli, co.out);
    std::printf("built %zu layers from %zu views in %.3f s -> %s (%zu bytes)\n", built.mli.layers.layer_count(), in.view_count(), secs,
                co.out.c_str(), static_cast<std::size_t>(fs::file_size(co.out)));
    return 0;
}

int cmd_render(const Common& co, const std::string& asset, TrajectorySpec spec, const std::string& kind, bool depth) {
    co.load();
    spec.kind = parse_trajectory_kind(kind);
    const auto mli = from_asset<Real>(import_asset(asset));
    const auto res = render_trajectory(mli, spec, co.out, depth);
    std::printf("rendered %zu frames to %s (hash %016llx)\n", res.frames.size(), co.out.c_str(), static_cast<unsigned long long>(res.hash));
    return 0;
}

int cmd_bench(const Common& co, const std::string& asset, std::size_t planes, std::vector<std::size_t> layer_counts, std::size_t reps,
              std::uint64_t scene) {
    auto c = co.load();
    BenchReport report;
    report.machine = machine_info();
    report.repetitions = reps;
    if (!asset.empty()) {
        const auto a = import_asset(asset);
        const auto mli = from_asset<Real>(a);
        report.height = a.height;
        report.width = a.width;
        report.asset_bytes = a.byte_size();
        report.renders.push_back(time_mli_render(mli, mli.layers.reference, reps, "mli"));
    } else {
        c.pipeline.planes = planes;
        report.height = c.pipeline.height;
        report.width = c.pipeline.width;
        const auto in = load_views(c, {}, scene, 0);
        bool mpi_done = false;
        for (std::size_t L : layer_counts) {
            c.pipeline.layers = L;
            c.pipeline.validate();
            nn::StageRegistry<Real> model(c.pipeline.dims(), c.train.seed);
            NoGradScope<Real> no_grad;
            BuildResult<Real> built;
            const double build_s = median_seconds(reps, [&] { built = build_scene_representation(model, in, c.pipeline); });
            if (report.build_seconds < 0) {
                report.build_seconds = build_s;
                report.parameter_count = model.store.element_count();
                report.asset_bytes = to_asset(built.mli).byte_size();
            }
            const auto& cam = in.cameras.front();
            report.renders.push_back(time_mli_render(built.mli, cam, reps, "mli_L" + std::to_string(L)));
            if (!mpi_done) {
                report.renders.push_back(time_mpi_render(mpi_from_build(model, built, c.pipeline), cam, reps, "mpi_P" + std::to_string(planes)));
                mpi_done = true;
            }
        }
    }
    const std::string text = report.to_json().dump(2) + "\n";
    if (co.out.empty()) std::cout << text;
    else write_text(co.out, text);
    for (const auto& r : report.renders) std::fprintf(stderr, "%-10s %8.2f fps\n", r.label.c_str(), r.fps());
    return 0;
}

/// Layer textures as RGBA PNGs, depth as 16-bit inverse-depth PNGs, plus layers.json.
int cmd_export(const Common& co, const std::string& asset) {
    co.load();
    const auto a = import_asset(asset);
    const auto mli = from_asset<Real>(a);
    const fs::path out = co.out;
    fs::create_directories(out);
    const std::size_t h = a.height, w = a.width;
    nlohmann::json meta{{"reference", camera_to_json(a.reference)}, {"layers", nlohmann::json::array()}};
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        Tensor<Real> rgba(Shape{4, h, w}), depth(Shape{h, w});
        std::copy_n(mli.layers.textures.data() + l * 4 * h * w, 4 * h * w, rgba.data());
        std::copy_n(mli.layers.depth.data() + l * h * w, h * w, depth.data());
        char name[64];
        std::snprintf(name, sizeof(name), "layer_%02zu_rgba.png", l);
        write_png(out / name, rgba);
        std::snprintf(name, sizeof(name), "layer_%02zu_depth.png", l);
        write_png16(out / name, depth_to_unit(depth, mli.range));
        meta["layers"].push_back({{"depth_far", a.layers[l].depth_far}, {"depth_near", a.layers[l].depth_near}});
    }
    write_text(out / "layers.json", meta.dump(2) + "\n");
    std::printf("exported %zu layers to %s\n", a.layers.size(), out.c_str());
    return 0;
}

int cmd_inspect(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    nlohmann::json j;
    if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "MLI1") {
        const auto a = decode_asset(bytes);
        j = {{"kind", "asset"}, {"bytes", bytes.size()}, {"height", a.height}, {"width", a.width},
             {"texture_bytes", a.texture_bytes()}, {"reference", camera_to_json(a.reference)}};
        for (const auto& l : a.layers) {
            const auto [lo, hi] = std::ranges::minmax(l.depth);
            j["layers"].push_back({{"interval", {l.depth_far, l.depth_near}}, {"depth_min", lo}, {"depth_max", hi}});
        }
    } else {
        const auto ck = decode_checkpoint(bytes);
        j = {{"kind", "checkpoint"}, {"bytes", bytes.size()}, {"parameters", ck.element_count()}, {"tensors", ck.entries.size()}};
        for (const auto& e : ck.entries) j["entries"].push_back({{"name", e.name}, {"shape", e.extents}});
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simpli: multilayer images from a few posed views"};
    app.require_subcommand(1);
    Common co;
    std::string data, checkpoint, views, asset, kind = "orbit";
    std::optional<std::size_t> steps;
    std::size_t count = 10, num_views = 0, planes = 40, reps = 20;
    std::uint64_t scene = kHeldOutSeedBase;
    bool held_out = false, depth = false;
    std::vector<std::size_t> layer_counts{4, 8};
    TrajectorySpec traj;

    auto* gen = app.add_subcommand("gen-data", "Render procedural scenes into a dataset directory");
    add_common(gen, co, true);
    gen->add_option("--count", count, "Number of scenes");
    gen->add_flag("--held-out", held_out, "Use seeds from the held-out range");

    auto* tr = app.add_subcommand("train", "Train a model; writes model.smpc, train_log.jsonl, config.json");
    add_common(tr, co, true);
    tr->add_option("--data", data, "Dataset directory (procedural scenes when omitted)")->check(CLI::ExistingDirectory);
    tr->add_option("--steps", steps, "Override train.steps");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against the nearest-source baseline (JSON lines)");
    add_common(ev, co, false);
    ev->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "Dataset directory (held-out procedural scenes when omitted)")->check(CLI::ExistingDirectory);

    auto* bu = app.add_subcommand("build", "Build an MLI asset from posed views");
    add_common(bu, co, true);
    bu->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    bu->add_option("--views", views, "Scene directory with cameras.json and view_###.png")->check(CLI::ExistingDirectory);
    bu->add_option("--scene", scene, "Procedural scene seed when --views is omitted");
    bu->add_option("--num-views", num_views, "Use the first N views");

    auto* re = app.add_subcommand("render", "Render a camera trajectory from an asset");
    add_common(re, co, true);
    re->add_option("--asset", asset)->required()->check(CLI::ExistingFile);
    re->add_option("--kind", kind, "orbit or spiral");
    re->add_option("--frames", traj.frames);
    re->add_option("--angle", traj.angle, "Orbit amplitude in radians");
    re->add_option("--radius", traj.radius, "Spiral radius");
    re->add_option("--forward", traj.forward, "Spiral forward amplitude");
    re->add_flag("--depth", depth, "Also write depth frames");

    auto* be = app.add_subcommand("bench", "Time building and rendering (JSON report)");
    add_common(be, co, false);
    be->add_option("--asset", asset, "Time rendering of an existing asset only")->check(CLI::ExistingFile);
    be->add_option("--planes", planes, "Plane count P");
    be->add_option("--layers", layer_counts, "Layer counts to compare");
    be->add_option("--repetitions", reps);
    be->add_option("--scene", scene, "Procedural scene seed");

    auto* ex = app.add_subcommand("export", "Write asset layers as PNG images plus layers.json");
    add_common(ex, co, true);
    ex->add_option("--asset", asset)->required()->check(CLI::ExistingFile);

    auto* in = app.add_subcommand("inspect", "Describe an asset or checkpoint file");
    std::string path;
    in->add_option("file", path)->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen_data(co, count, held_out);
        if (*tr) return cmd_train(co, data, steps);
        if (*ev) return cmd_eval(co, checkpoint, data);
        if (*bu) return cmd_build(co, checkpoint, views, scene, num_views);
        if (*re) return cmd_render(co, asset, traj, kind, depth);
        if (*be) return cmd_bench(co, asset, planes, layer_counts, reps, scene);
        if (*ex) return cmd_export(co, asset);
        if (*in) return cmd_inspect(path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
