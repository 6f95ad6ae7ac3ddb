#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "holofocus/focus.hpp"
#include "holofocus/models.hpp"
#include "holofocus/preprocess.hpp"
#include "holofocus/train.hpp"

namespace holo {

struct ModelEntry {
    std::string name;
    std::string family; // "cnn" | "vit"
    nlohmann::json config;
};

struct ScenarioEntry {
    Scenario scenario;
    int out_size = 64;

    std::string name() const { return scenario.name(); }
};

// Parsed and validated experiment configuration. Schema errors name the
// offending field, e.g. "scenarios[0].tag".
struct ExperimentConfig {
    std::uint64_t seed = 0;
    OpticalConfig optics;
    std::vector<std::uint8_t> target_bits_x = {1, 0, 1, 1, 0, 0, 1, 0};
    std::vector<std::uint8_t> target_bits_y = {0, 1, 1, 0, 1, 0, 0, 1};
    int target_cell_px = 6;
    double target_amp_low = 0.2;
    double target_amp_high = 1.0;
    DatasetSpec dataset;
    std::vector<ScenarioEntry> scenarios;
    std::vector<ModelEntry> models;
    TrainSpec train;
    double train_frac = 0.8;
    int test_per_class = 20;
    std::vector<RoiAnchor> eval_anchors = {RoiAnchor::center, RoiAnchor::bottom_left};
    int explain_images = 4;
    AttentionMethod attention_method = AttentionMethod::rollout;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig desk_default();

    TargetPattern build_target() const;
};

struct PipelineOptions {
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
    int threads = 0;           // 0 keeps the current pool size
    std::string cache_dir;     // empty: <out>/.cache, HOLOFOCUS_CACHE wins
};

// simulate -> preprocess -> split -> train -> eval -> explain, with
// hash-keyed stage skipping and a run manifest listing every artifact.
// Throws on the first failing stage; completed artifacts stay on disk.
void run_pipeline(const ExperimentConfig& config, const PipelineOptions& opts);

struct LayerDescription {
    std::string path;
    std::string kind;
    std::vector<int> output_shape;
    std::int64_t param_count = 0;
};

std::vector<LayerDescription> describe_model(ModelGraph<float>& model);

// Derives all pipeline seeds from the top-level seed; documented streams.
std::uint64_t pipeline_seed(const ExperimentConfig& cfg, const std::string& stream);

} // namespace holo
