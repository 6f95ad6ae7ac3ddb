#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "holofocus/dataset.hpp"
#include "holofocus/explain.hpp"
#include "holofocus/io/checkpoint.hpp"
#include "holofocus/io/csv.hpp"
#include "holofocus/io/plot.hpp"
#include "holofocus/io/png_io.hpp"
#include "holofocus/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

holo::ExperimentConfig load_config(const GlobalArgs& g) {
    holo::ExperimentConfig cfg = g.config_path.empty()
                                     ? holo::ExperimentConfig::desk_default()
                                     : holo::ExperimentConfig::from_json(
                                           holo::io::read_json_file(g.config_path));
    if (g.seed_set) cfg.seed = g.seed;
    return cfg;
}

void apply_threads(const GlobalArgs& g) {
    if (g.threads > 0) holo::set_thread_count(g.threads);
}

int run_simulate(const GlobalArgs& g) {
    apply_threads(g);
    holo::ExperimentConfig cfg = load_config(g);
    holo::DatasetSpec spec = cfg.dataset;
    spec.seed = holo::pipeline_seed(cfg, "simulate");
    auto manifest = holo::build_raw_dataset(cfg.build_target(), cfg.optics, spec,
                                            (fs::path(g.out_dir) / "raw").string());
    std::cout << "wrote " << manifest.entries.size() << " holograms to " << g.out_dir
              << "/raw\n";
    return 0;
}

int run_preprocess(const GlobalArgs& g, const std::string& only_tag) {
    apply_threads(g);
    holo::ExperimentConfig cfg = load_config(g);
    auto raw = holo::io::load_manifest((fs::path(g.out_dir) / "raw" / "manifest.json").string());
    int done = 0;
    for (const auto& s : cfg.scenarios) {
        if (!only_tag.empty() && only_tag != to_string(s.scenario.tag)) continue;
        const std::string dir = (fs::path(g.out_dir) / "data" / s.name()).string();
        holo::make_scenario_dataset(raw, s.scenario, s.out_size, dir);
        std::cout << "scenario " << s.name() << " -> " << dir << "\n";
        ++done;
    }
    if (done == 0) throw holo::ConfigError("no configured scenario matches tag '" + only_tag + "'");
    return 0;
}

int run_baseline(const GlobalArgs& g, const std::string& manifest_path, int index, double z_min,
                 double z_max, double step, const std::string& metric) {
    apply_threads(g);
    auto manifest = holo::io::load_manifest(manifest_path);
    if (index < 0 || index >= static_cast<int>(manifest.entries.size()))
        throw holo::ConfigError("--index outside manifest (" +
                                std::to_string(manifest.entries.size()) + " entries)");
    const auto& entry = manifest.entries[static_cast<size_t>(index)];

    holo::Hologram holo_img;
    holo_img.intensity = holo::load_raw_intensity(manifest, entry);
    holo_img.z_true_um = entry.z_true_um;
    holo_img.class_label = entry.class_label;
    holo_img.config = manifest.optics;

    if (z_min == 0 && z_max == 0) {
        z_min = manifest.dataset.z0_um - 5.0 * manifest.dataset.z_step_um;
        z_max = manifest.dataset.z0_um +
                (manifest.dataset.n_classes + 4) * manifest.dataset.z_step_um;
    }
    if (step <= 0) step = manifest.dataset.z_step_um;

    const holo::FocusMetricKind kind = holo::focus_metric_from_string(metric);
    holo::SweepResult res = holo::autofocus_sweep(holo_img, z_min, z_max, step, kind);

    fs::create_directories(fs::path(g.out_dir) / "baseline");
    const std::string base =
        (fs::path(g.out_dir) / "baseline" / ("sweep_" + std::to_string(index) + "_" + metric))
            .string();
    holo::io::CsvWriter csv({"z_um", "metric", "kind"});
    for (const auto& p : res.curve)
        csv.add_row_mixed({holo::io::CsvWriter::format(p.z_um),
                           holo::io::CsvWriter::format(p.metric), metric});
    csv.save(base + ".csv");
    holo::io::write_json_file(json{{"index", index},
                                   {"metric", metric},
                                   {"convention", res.convention},
                                   {"z_best_um", res.z_best_um},
                                   {"z_true_um", entry.z_true_um},
                                   {"points", res.curve.size()}},
                              base + ".json");
    std::cout << "z_best = " << res.z_best_um << " um (true " << entry.z_true_um << " um), "
              << res.curve.size() << " points, " << res.convention << " " << metric << "\n";
    return 0;
}

int run_train(const GlobalArgs& g, const std::string& model_name, const std::string& scenario_tag) {
    apply_threads(g);
    holo::ExperimentConfig cfg = load_config(g);

    const holo::ModelEntry* me = nullptr;
    for (const auto& m : cfg.models)
        if (m.name == model_name || m.family == model_name) me = &m;
    if (!me) throw holo::ConfigError("--model '" + model_name + "' not in config");
    const holo::ScenarioEntry* se = nullptr;
    for (const auto& s : cfg.scenarios)
        if (to_string(s.scenario.tag) == scenario_tag) se = &s;
    if (!se) throw holo::ConfigError("--scenario '" + scenario_tag + "' not in config");

    const fs::path data_dir = fs::path(g.out_dir) / "data" / se->name();
    if (!fs::exists(data_dir / "split_train.json")) {
        auto scen = holo::io::load_manifest((data_dir / "manifest.json").string());
        holo::SplitSpec split_spec;
        split_spec.train_frac = cfg.train_frac;
        split_spec.test_per_class = cfg.test_per_class;
        split_spec.seed = holo::pipeline_seed(cfg, "split");
        auto split = holo::split_dataset(scen, split_spec);
        holo::io::save_manifest(split.train, (data_dir / "split_train.json").string());
        holo::io::save_manifest(split.val, (data_dir / "split_val.json").string());
        holo::io::save_manifest(split.test, (data_dir / "split_test.json").string());
    }

    auto train_set =
        holo::load_image_set(holo::io::load_manifest((data_dir / "split_train.json").string()));
    auto val_set =
        holo::load_image_set(holo::io::load_manifest((data_dir / "split_val.json").string()));

    const std::string job = me->name + "_" + se->name();
    holo::TrainSpec tspec = cfg.train;
    tspec.seed = holo::pipeline_seed(cfg, "train:" + job);
    auto model = holo::build_model_from_json<float>(me->family, me->config,
                                                    holo::pipeline_seed(cfg, "model:" + job));
    holo::TrainResult res = holo::train_classifier(model, train_set, val_set, tspec);

    const fs::path model_dir = fs::path(g.out_dir) / "models" / job;
    fs::create_directories(model_dir);
    holo::save_history_csv(res.history, (model_dir / "history.csv").string());
    holo::io::save_checkpoint(model, (model_dir / "checkpoint").string(), res.best_epoch,
                              json{{"scenario", se->name()},
                                   {"best_val_loss", res.best_val_loss}});
    std::cout << "trained " << job << ": best epoch " << res.best_epoch << ", best val loss "
              << res.best_val_loss << ", epochs run " << res.history.size() << "\n";
    return 0;
}

int run_eval(const GlobalArgs& g, const std::string& model_name, const std::string& scenario_tag,
             const std::string& anchor_name) {
    apply_threads(g);
    holo::ExperimentConfig cfg = load_config(g);
    const holo::ScenarioEntry* se = nullptr;
    for (const auto& s : cfg.scenarios)
        if (to_string(s.scenario.tag) == scenario_tag) se = &s;
    if (!se) throw holo::ConfigError("--scenario '" + scenario_tag + "' not in config");

    const std::string job = model_name + "_" + se->name();
    const fs::path model_dir = fs::path(g.out_dir) / "models" / job;
    auto model = holo::io::load_checkpoint((model_dir / "checkpoint").string());

    const fs::path data_dir = fs::path(g.out_dir) / "data" / se->name();
    auto test_manifest = holo::io::load_manifest((data_dir / "split_test.json").string());
    const holo::RoiAnchor anchor = holo::roi_anchor_from_string(anchor_name);
    auto test_set = holo::load_image_set_with_anchor(test_manifest, anchor);

    holo::EvalReport rep = holo::evaluate_classifier(model, test_set);
    fs::create_directories(fs::path(g.out_dir) / "eval");
    const std::string base =
        (fs::path(g.out_dir) / "eval" / (job + "_" + anchor_name)).string();
    holo::io::write_json_file(rep.to_json(), base + ".json");
    holo::io::render_confusion_png(rep.confusion, base + "_confusion.png");
    holo::io::render_histogram_png(rep.distance_error_hist, base + "_error_hist.png");
    std::cout << "eval " << job << " @" << anchor_name << ": accuracy " << rep.accuracy
              << ", max class error " << rep.max_abs_class_error << " ("
              << rep.max_abs_class_error * rep.z_step_um << " um)\n";
    return 0;
}

int run_explain(const GlobalArgs& g, const std::string& ckpt_dir, const std::string& image_path,
                const std::string& method, int target_class, const std::string& attn_method,
                const std::string& layer) {
    apply_threads(g);
    auto model = holo::io::load_checkpoint(ckpt_dir);
    holo::Image img = holo::io::load_unit_png(image_path);

    holo::Image heat;
    if (method == "gradcam") {
        const int cls = target_class >= 0 ? target_class : 0;
        heat = holo::grad_cam(model, img, cls, layer);
    } else if (method == "attention") {
        heat = holo::attention_map(model, img,
                                   holo::attention_method_from_string(attn_method));
    } else {
        throw holo::ConfigError("--method must be gradcam|attention, got '" + method + "'");
    }

    fs::create_directories(g.out_dir);
    const std::string stem = fs::path(image_path).stem().string();
    const std::string base = (fs::path(g.out_dir) / (stem + "_" + method)).string();
    holo::emit_overlay(img, heat, base + "_overlay.png");
    holo::save_heatmap_csv(heat, base + "_heatmap.csv");
    std::cout << "wrote " << base << "_overlay.png (spatial entropy "
              << holo::spatial_entropy(heat) << " bits)\n";
    return 0;
}

int run_describe(const GlobalArgs& g, const std::string& checkpoint, const std::string& family,
                 const std::string& model_config_path) {
    (void)g;
    holo::ModelGraph<float> model;
    if (!checkpoint.empty()) {
        model = holo::io::load_checkpoint(checkpoint);
    } else {
        json cfg;
        if (!model_config_path.empty()) cfg = holo::io::read_json_file(model_config_path);
        else if (family == "cnn") cfg = holo::cnn_config_to_json(holo::CnnConfig{});
        else if (family == "vit") cfg = holo::vit_config_to_json(holo::VitConfig{});
        else throw holo::ConfigError("--family must be cnn|vit");
        model = holo::build_model_from_json<float>(family, cfg, 0);
    }

    auto rows = holo::describe_model(model);
    std::printf("%-16s %-26s %-20s %12s\n", "layer", "kind", "output", "params");
    std::int64_t total = 0;
    for (const auto& r : rows) {
        std::printf("%-16s %-26s %-20s %12lld\n", r.path.c_str(), r.kind.c_str(),
                    holo::nn::shape_str(r.output_shape).c_str(),
                    static_cast<long long>(r.param_count));
        total += r.param_count;
    }
    std::printf("total parameters: %lld\n", static_cast<long long>(total));

    if (model.family == "cnn") {
        auto cfg = holo::cnn_config_from_json(model.config_json);
        std::printf("formula check (cnn): %lld\n",
                    static_cast<long long>(holo::cnn_param_count(cfg)));
    } else {
        auto cfg = holo::vit_config_from_json(model.config_json);
        std::printf("formula check (vit): %lld\n",
                    static_cast<long long>(holo::vit_param_count(cfg)));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"holofocus: hologram-simulation autofocus toolkit (classical sweep + CNN/ViT classification)"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "experiment config JSON")->envname("HOLOFOCUS_CONFIG");
    app.add_option("--out", g.out_dir, "artifact directory (default: out)");
    auto* seed_opt = app.add_option("--seed", g.seed, "override the top-level seed");
    app.add_option("--threads", g.threads, "worker threads (default: keep current)");

    auto* sim = app.add_subcommand("simulate", "record the raw hologram dataset");
    auto* pre = app.add_subcommand("preprocess", "build scenario datasets from raw holograms");
    std::string pre_tag;
    pre->add_option("--scenario", pre_tag, "only this scenario tag (SFO|NSO|SFN|NSN)");

    auto* base = app.add_subcommand("baseline", "classical focus-metric sweep on one hologram");
    std::string base_manifest;
    int base_index = 0;
    double base_zmin = 0, base_zmax = 0, base_step = 0;
    std::string base_metric = "variance";
    base->add_option("--manifest", base_manifest, "dataset manifest")->required();
    base->add_option("--index", base_index, "image index in the manifest");
    base->add_option("--z-min", base_zmin, "sweep start (um)");
    base->add_option("--z-max", base_zmax, "sweep end (um)");
    base->add_option("--step", base_step, "sweep step (um)");
    base->add_option("--metric", base_metric, "variance|entropy");

    auto* train = app.add_subcommand("train", "train one model on one scenario");
    std::string train_model = "cnn_small", train_scenario = "NSO";
    train->add_option("--model", train_model, "model name from the config (cnn|vit also match)");
    train->add_option("--scenario", train_scenario, "scenario tag (SFO|NSO|SFN|NSN)");

    auto* eval = app.add_subcommand("eval", "evaluate a trained model on the test split");
    std::string eval_model = "cnn_small", eval_scenario = "NSO", eval_anchor = "center";
    eval->add_option("--model", eval_model, "model name");
    eval->add_option("--scenario", eval_scenario, "scenario tag");
    eval->add_option("--anchor", eval_anchor, "center|bottom_left");

    auto* expl = app.add_subcommand("explain", "Grad-CAM / attention heatmap for one image");
    std::string expl_model, expl_image, expl_method = "gradcam", expl_attn = "rollout", expl_layer;
    int expl_class = -1;
    expl->add_option("--model", expl_model, "checkpoint directory")->required();
    expl->add_option("--image", expl_image, "input PNG (model input size)")->required();
    expl->add_option("--method", expl_method, "gradcam|attention");
    expl->add_option("--target-class", expl_class, "class for gradcam (default 0)");
    expl->add_option("--attn-method", expl_attn, "last_layer|rollout");
    expl->add_option("--layer", expl_layer, "conv layer path for gradcam (default: last conv)");

    auto* run = app.add_subcommand("run", "full pipeline: simulate...explain");

    auto* model_cmd = app.add_subcommand("model", "model utilities");
    auto* describe = model_cmd->add_subcommand("describe", "print the layer table");
    std::string desc_ckpt, desc_family = "cnn", desc_cfg;
    describe->add_option("--checkpoint", desc_ckpt, "checkpoint directory");
    describe->add_option("--family", desc_family, "cnn|vit (when no checkpoint)");
    describe->add_option("--model-config", desc_cfg, "model config JSON (when no checkpoint)");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        if (sim->parsed()) return run_simulate(g);
        if (pre->parsed()) return run_preprocess(g, pre_tag);
        if (base->parsed())
            return run_baseline(g, base_manifest, base_index, base_zmin, base_zmax, base_step,
                                base_metric);
        if (train->parsed()) return run_train(g, train_model, train_scenario);
        if (eval->parsed()) return run_eval(g, eval_model, eval_scenario, eval_anchor);
        if (expl->parsed())
            return run_explain(g, expl_model, expl_image, expl_method, expl_class, expl_attn,
                               expl_layer);
        if (run->parsed()) {
            holo::ExperimentConfig cfg = load_config(g);
            holo::PipelineOptions opts;
            opts.out_dir = g.out_dir;
            if (g.seed_set) opts.seed_override = g.seed;
            opts.threads = g.threads;
            holo::run_pipeline(cfg, opts);
            std::cout << "pipeline complete: " << g.out_dir << "/run_manifest.json\n";
            return 0;
        }
        if (model_cmd->parsed() && describe->parsed())
            return run_describe(g, desc_ckpt, desc_family, desc_cfg);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
