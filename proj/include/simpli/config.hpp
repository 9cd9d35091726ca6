#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "simpli/pipeline.hpp"
#include "simpli/train.hpp"

namespace simpli {

/// Everything a CLI run can be configured with. On disk this is a JSON
/// object with optional sections "pipeline", "train", "dataset" and "eval";
/// unknown sections or keys are rejected.
struct RunConfig {
    PipelineConfig pipeline;
    TrainConfig train;
    DatasetConfig dataset;
    EvalConfig eval;

    void validate() const {
        pipeline.validate();
        train.validate();
        dataset.validate();
        if (dataset.width != pipeline.width || dataset.height != pipeline.height)
            throw std::invalid_argument("config: dataset resolution differs from pipeline resolution");
        if (dataset.cameras < train.max_views + train.novel_views)
            throw std::invalid_argument("config: scenes have fewer cameras than max_views + novel_views");
    }
};

namespace detail {

class SectionReader {
public:
    SectionReader(const nlohmann::json& j, std::string section) : j_(j), section_(std::move(section)) {
        if (!j_.is_object()) throw std::invalid_argument("config: section '" + section_ + "' must be an object");
    }

    template <typename U>
    void field(const char* key, U& dst) {
        known_.insert(key);
        if (!j_.contains(key)) return;
        try {
            dst = j_.at(key).get<U>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("config: " + section_ + "." + key + ": " + e.what());
        }
    }

    void finish() const {
        for (const auto& [k, _] : j_.items())
            if (!known_.contains(k)) throw std::invalid_argument("config: unknown key '" + section_ + "." + k + "'");
    }

private:
    const nlohmann::json& j_;
    std::string section_;
    std::set<std::string> known_;
};

// One field list per struct, shared by reading and writing.
template <typename V>
void visit_fields(PipelineConfig& c, V&& v) {
    v("planes", c.planes);
    v("layers", c.layers);
    v("tau", c.tau);
    v("feature_channels", c.feature_channels);
    v("state_channels", c.state_channels);
    v("pyramid_width", c.pyramid_width);
    v("decoder_hidden", c.decoder_hidden);
    v("height", c.height);
    v("width", c.width);
    v("deterministic", c.deterministic);
}

template <typename V>
void visit_fields(TrainConfig& c, V&& v) {
    v("steps", c.steps);
    v("learning_rate", c.learning_rate);
    v("min_views", c.min_views);
    v("max_views", c.max_views);
    v("novel_views", c.novel_views);
    v("batch", c.batch);
    v("seed", c.seed);
    v("checkpoint_every", c.checkpoint_every);
    v("weight_l1", c.weights.l1);
    v("weight_perceptual", c.weights.perceptual);
    v("weight_tv", c.weights.tv);
}

template <typename V>
void visit_fields(DatasetConfig& c, V&& v) {
    v("near", c.range.near);
    v("far", c.range.far);
    v("width", c.width);
    v("height", c.height);
    v("focal", c.focal);
    v("max_baseline", c.max_baseline);
    v("max_rotation_deg", c.max_rotation_deg);
    v("max_tilt_deg", c.max_tilt_deg);
    v("min_cards", c.min_cards);
    v("max_cards", c.max_cards);
    v("cameras", c.cameras);
}

template <typename V>
void visit_fields(EvalConfig& c, V&& v) {
    v("scenes", c.scenes);
    v("first_seed", c.first_seed);
    v("view_counts", c.view_counts);
    v("novel_views", c.novel_views);
}

template <typename S>
void read_section(const nlohmann::json& root, const char* name, S& dst) {
    if (!root.contains(name)) return;
    SectionReader r(root.at(name), name);
    visit_fields(dst, [&r](const char* key, auto& field) { r.field(key, field); });
    r.finish();
}

template <typename S>
nlohmann::json write_section(S s) {
    nlohmann::json j = nlohmann::json::object();
    visit_fields(s, [&j](const char* key, const auto& field) { j[key] = field; });
    return j;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    for (const auto& [k, _] : j.items())
        if (k != "pipeline" && k != "train" && k != "dataset" && k != "eval") throw std::invalid_argument("config: unknown section '" + k + "'");
    RunConfig c;
    detail::read_section(j, "pipeline", c.pipeline);
    detail::read_section(j, "train", c.train);
    detail::read_section(j, "dataset", c.dataset);
    detail::read_section(j, "eval", c.eval);
    return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"pipeline", detail::write_section(c.pipeline)},
            {"train", detail::write_section(c.train)},
            {"dataset", detail::write_section(c.dataset)},
            {"eval", detail::write_section(c.eval)}};
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace simpli
