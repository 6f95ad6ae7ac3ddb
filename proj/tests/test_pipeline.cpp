#include <doctest.h>

#include <filesystem>

#include "holofocus/pipeline.hpp"
#include "test_util.hpp"

using namespace holo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 2 classes x 10 images, one tiny model, few epochs: the smoke config
json mini_config() {
    return json{
        {"seed", 7},
        {"optics",
         {{"wavelength_um", 0.6}, {"pixel_pitch_um", 1.0}, {"grid_size", 64},
          {"numerical_aperture", 0.3}}},
        {"target", {{"bits_x", {1, 0, 1}}, {"bits_y", {0, 1}}, {"cell_px", 4}}},
        {"dataset",
         {{"z0_um", 50.0}, {"z_step_um", 1.0}, {"n_classes", 2}, {"per_class", 10},
          {"noise_sigma", 0.01}}},
        {"scenarios", json::array({{{"tag", "NSO"}, {"roi_anchor", "center"}, {"roi_size", 32},
                                    {"out_size", 16}}})},
        {"models", json::array({{{"name", "cnn_tiny"},
                                 {"family", "cnn"},
                                 {"config",
                                  {{"input_size", 16},
                                   {"blocks", json::array({{{"out_channels", 4}, {"stride", 1},
                                                            {"pool", true}}})},
                                   {"n_classes", 2}}}}})},
        {"train",
         {{"max_epochs", 3}, {"patience", 2}, {"batch_size", 4}, {"lr", 1e-3},
          {"train_frac", 0.8}, {"test_per_class", 2}}},
        {"eval", {{"anchors", json::array({"center", "bottom_left"})}}},
        {"explain", {{"n_images", 1}, {"attention_method", "rollout"}}}};
}

} // namespace

TEST_CASE("experiment config: schema violations name the field") {
    json bad = mini_config();
    bad["scenarios"][0]["tag"] = "XFO";
    try {
        ExperimentConfig::from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("scenarios[0].tag") != std::string::npos);
        CHECK(msg.find("XFO") != std::string::npos);
    }

    json bad2 = mini_config();
    bad2["train"]["lr"] = -1.0;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad2), ConfigError);

    json bad3 = mini_config();
    bad3["models"][0].erase("family");
    try {
        ExperimentConfig::from_json(bad3);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("models[0].family") != std::string::npos);
    }

    // the good config parses
    ExperimentConfig cfg = ExperimentConfig::from_json(mini_config());
    CHECK(cfg.dataset.n_classes == 2);
    CHECK(cfg.scenarios.size() == 1);
    CHECK(cfg.models.size() == 1);
}

TEST_CASE("pipeline seeds are stable and labeled") {
    ExperimentConfig cfg = ExperimentConfig::from_json(mini_config());
    const auto a = pipeline_seed(cfg, "simulate");
    const auto b = pipeline_seed(cfg, "split");
    CHECK(a != b);
    CHECK(a == pipeline_seed(cfg, "simulate"));
    cfg.seed = 8;
    CHECK(a != pipeline_seed(cfg, "simulate"));
}

TEST_CASE("run_pipeline: end-to-end smoke run, idempotent re-run") {
    testutil::TempDir tmp("pipe");
    ExperimentConfig cfg = ExperimentConfig::from_json(mini_config());
    PipelineOptions opts;
    opts.out_dir = tmp.str() + "/run";

    run_pipeline(cfg, opts);

    const fs::path out(opts.out_dir);
    CHECK(fs::exists(out / "raw" / "manifest.json"));
    CHECK(fs::exists(out / "data" / "NSO_center32" / "manifest.json"));
    CHECK(fs::exists(out / "data" / "NSO_center32" / "split_test.json"));
    CHECK(fs::exists(out / "models" / "cnn_tiny_NSO_center32" / "checkpoint" / "model.json"));
    CHECK(fs::exists(out / "models" / "cnn_tiny_NSO_center32" / "history.csv"));
    CHECK(fs::exists(out / "eval" / "cnn_tiny_NSO_center32_center.json"));
    CHECK(fs::exists(out / "eval" / "cnn_tiny_NSO_center32_bottom_left.json"));
    CHECK(fs::exists(out / "eval" / "robustness_report.json"));
    CHECK(fs::exists(out / "explain" / "cnn_tiny_NSO_center32" / "sample0_overlay.png"));
    CHECK(fs::exists(out / "run_manifest.json"));

    // every listed artifact exists and matches its recorded hash
    json manifest = io::read_json_file((out / "run_manifest.json").string());
    REQUIRE(manifest.at("artifacts").size() > 0);
    for (const auto& row : manifest.at("artifacts")) {
        const fs::path p = out / row.at("path").get<std::string>();
        REQUIRE(fs::exists(p));
        CHECK(sha256_file_hex(p.string()) == row.at("sha256").get<std::string>());
    }

    // second run over the same tree: checkpoint bytes untouched (skipped)
    const fs::path ckpt = out / "models" / "cnn_tiny_NSO_center32" / "checkpoint" / "model.json";
    const auto mtime = fs::last_write_time(ckpt);
    run_pipeline(cfg, opts);
    CHECK(fs::last_write_time(ckpt) == mtime);
}

TEST_CASE("run_pipeline: changed training config invalidates only downstream stages") {
    testutil::TempDir tmp("pipe2");
    ExperimentConfig cfg = ExperimentConfig::from_json(mini_config());
    PipelineOptions opts;
    opts.out_dir = tmp.str() + "/run";
    run_pipeline(cfg, opts);

    const fs::path raw_manifest = fs::path(opts.out_dir) / "raw" / "manifest.json";
    const auto raw_mtime = fs::last_write_time(raw_manifest);
    const fs::path ckpt =
        fs::path(opts.out_dir) / "models" / "cnn_tiny_NSO_center32" / "checkpoint" / "model.json";
    const auto ck_mtime = fs::last_write_time(ckpt);

    cfg.train.max_epochs = 4; // retrain, but do not re-simulate
    run_pipeline(cfg, opts);
    CHECK(fs::last_write_time(raw_manifest) == raw_mtime);
    CHECK(fs::last_write_time(ckpt) != ck_mtime);
}
