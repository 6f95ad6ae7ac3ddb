#include "holofocus/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "holofocus/dataset.hpp"
#include "holofocus/explain.hpp"
#include "holofocus/io/checkpoint.hpp"
#include "holofocus/io/csv.hpp"
#include "holofocus/io/plot.hpp"
#include "holofocus/io/png_io.hpp"

namespace holo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCodeVersion = "holofocus/0.1.0";

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
    throw ConfigError(field + ": " + what);
}

const json& need(const json& j, const std::string& ctx, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) field_error(ctx + "." + key, "missing required field");
    return *it;
}

std::vector<std::uint8_t> parse_bits(const json& j, const std::string& ctx) {
    if (!j.is_array()) field_error(ctx, "expected an array of 0/1");
    std::vector<std::uint8_t> bits;
    for (const auto& v : j) {
        if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
            field_error(ctx, "bits must be 0 or 1");
        bits.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
    return bits;
}

} // namespace

ExperimentConfig ExperimentConfig::desk_default() {
    ExperimentConfig c;
    c.dataset.per_class = 60;
    ModelEntry cnn{"cnn_small", "cnn", cnn_config_to_json(CnnConfig{})};
    ModelEntry vit{"vit_small", "vit", vit_config_to_json(VitConfig{})};
    c.models = {cnn, vit};
    ScenarioEntry s;
    s.scenario = Scenario{ScenarioTag::NSO, RoiAnchor::center, 64};
    s.out_size = 64;
    c.scenarios = {s};
    return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c = desk_default();
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");

    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("optics")) {
        try {
            c.optics = io::optics_from_json(j.at("optics"));
        } catch (const Error& e) {
            field_error("optics", e.what());
        }
    }

    if (j.contains("target")) {
        const json& t = j.at("target");
        if (t.contains("bits_x")) c.target_bits_x = parse_bits(t.at("bits_x"), "target.bits_x");
        if (t.contains("bits_y")) c.target_bits_y = parse_bits(t.at("bits_y"), "target.bits_y");
        if (t.contains("cell_px")) c.target_cell_px = t.at("cell_px").get<int>();
        if (t.contains("amp_low")) c.target_amp_low = t.at("amp_low").get<double>();
        if (t.contains("amp_high")) c.target_amp_high = t.at("amp_high").get<double>();
        if (c.target_cell_px < 2) field_error("target.cell_px", "must be at least 2");
    }

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        if (d.contains("z0_um")) c.dataset.z0_um = d.at("z0_um").get<double>();
        if (d.contains("z_step_um")) c.dataset.z_step_um = d.at("z_step_um").get<double>();
        if (d.contains("n_classes")) c.dataset.n_classes = d.at("n_classes").get<int>();
        if (d.contains("per_class")) c.dataset.per_class = d.at("per_class").get<int>();
        if (d.contains("noise_sigma")) c.dataset.noise_sigma = d.at("noise_sigma").get<double>();
        try {
            c.dataset.validate();
        } catch (const Error& e) {
            field_error("dataset", e.what());
        }
    }

    if (j.contains("scenarios")) {
        const json& arr = j.at("scenarios");
        if (!arr.is_array() || arr.empty()) field_error("scenarios", "expected a non-empty array");
        c.scenarios.clear();
        for (size_t i = 0; i < arr.size(); ++i) {
            const std::string ctx = "scenarios[" + std::to_string(i) + "]";
            const json& s = arr[i];
            ScenarioEntry e;
            try {
                e.scenario.tag = scenario_tag_from_string(need(s, ctx, "tag").get<std::string>());
            } catch (const ConfigError& err) {
                field_error(ctx + ".tag", err.what());
            }
            if (s.contains("roi_anchor")) {
                try {
                    e.scenario.roi_anchor =
                        roi_anchor_from_string(s.at("roi_anchor").get<std::string>());
                } catch (const ConfigError& err) {
                    field_error(ctx + ".roi_anchor", err.what());
                }
            }
            e.scenario.roi_size = s.value("roi_size", c.optics.grid_size / 2);
            e.out_size = s.value("out_size", e.scenario.roi_size);
            if (e.scenario.roi_size < 3 || e.scenario.roi_size > c.optics.grid_size)
                field_error(ctx + ".roi_size", "must be within [3, grid_size]");
            if (e.out_size < 3 || e.out_size > e.scenario.roi_size)
                field_error(ctx + ".out_size", "must be within [3, roi_size]");
            c.scenarios.push_back(e);
        }
    }

    if (j.contains("models")) {
        const json& arr = j.at("models");
        if (!arr.is_array() || arr.empty()) field_error("models", "expected a non-empty array");
        c.models.clear();
        for (size_t i = 0; i < arr.size(); ++i) {
            const std::string ctx = "models[" + std::to_string(i) + "]";
            const json& m = arr[i];
            ModelEntry e;
            e.family = need(m, ctx, "family").get<std::string>();
            if (e.family != "cnn" && e.family != "vit")
                field_error(ctx + ".family", "expected cnn|vit, got '" + e.family + "'");
            e.name = m.value("name", e.family);
            e.config = m.contains("config")
                           ? m.at("config")
                           : (e.family == "cnn" ? cnn_config_to_json(CnnConfig{})
                                                : vit_config_to_json(VitConfig{}));
            try {
                build_model_from_json<float>(e.family, e.config, 0);
            } catch (const Error& err) {
                field_error(ctx + ".config", err.what());
            }
            c.models.push_back(e);
        }
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        if (t.contains("max_epochs")) c.train.max_epochs = t.at("max_epochs").get<int>();
        if (t.contains("patience")) c.train.patience = t.at("patience").get<int>();
        if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
        if (t.contains("lr")) c.train.lr = t.at("lr").get<double>();
        if (t.contains("train_frac")) c.train_frac = t.at("train_frac").get<double>();
        if (t.contains("test_per_class")) c.test_per_class = t.at("test_per_class").get<int>();
        if (c.train.max_epochs < 1) field_error("train.max_epochs", "must be positive");
        if (c.train.patience < 1) field_error("train.patience", "must be positive");
        if (c.train.batch_size < 1) field_error("train.batch_size", "must be positive");
        if (c.train.lr <= 0) field_error("train.lr", "must be positive");
        if (c.train_frac <= 0 || c.train_frac >= 1) field_error("train.train_frac", "must be in (0,1)");
        if (c.test_per_class < 1) field_error("train.test_per_class", "must be positive");
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        if (e.contains("anchors")) {
            c.eval_anchors.clear();
            const json& arr = e.at("anchors");
            if (!arr.is_array() || arr.empty())
                field_error("eval.anchors", "expected a non-empty array");
            for (size_t i = 0; i < arr.size(); ++i) {
                try {
                    c.eval_anchors.push_back(roi_anchor_from_string(arr[i].get<std::string>()));
                } catch (const ConfigError& err) {
                    field_error("eval.anchors[" + std::to_string(i) + "]", err.what());
                }
            }
        }
    }

    if (j.contains("explain")) {
        const json& e = j.at("explain");
        if (e.contains("n_images")) c.explain_images = e.at("n_images").get<int>();
        if (c.explain_images < 0) field_error("explain.n_images", "must be nonnegative");
        if (e.contains("attention_method")) {
            try {
                c.attention_method =
                    attention_method_from_string(e.at("attention_method").get<std::string>());
            } catch (const ConfigError& err) {
                field_error("explain.attention_method", err.what());
            }
        }
    }
    return c;
}

TargetPattern ExperimentConfig::build_target() const {
    return generate_target(target_bits_x, target_bits_y, target_cell_px, optics.grid_size,
                           target_amp_low, target_amp_high);
}

std::uint64_t pipeline_seed(const ExperimentConfig& cfg, const std::string& stream) {
    return seed_stream(cfg.seed, stream);
}

std::vector<LayerDescription> describe_model(ModelGraph<float>& model) {
    nn::Tensor<float> x({1, 1, model.input_size, model.input_size});
    std::vector<nn::Cache<float>> caches;
    std::vector<nn::Tensor<float>> acts;
    model.forward_collect(x, caches, &acts);

    std::vector<LayerDescription> rows;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        LayerDescription d;
        d.path = model.layers[i]->path();
        d.kind = model.layers[i]->kind();
        d.output_shape = acts[i].shape;
        std::vector<nn::ParamRef<float>> ps;
        model.layers[i]->collect_params(ps);
        for (const auto& p : ps) d.param_count += p.value->numel();
        rows.push_back(std::move(d));
    }
    return rows;
}

// ---- stage runner --------------------------------------------------------

namespace {

class StageRunner {
public:
    StageRunner(fs::path out, fs::path cache) : out_(std::move(out)), cache_(std::move(cache)) {
        fs::create_directories(out_);
        fs::create_directories(cache_);
    }

    // Runs body unless a marker proves identical inputs already produced
    // identical outputs. Outputs are files or directories relative to out/.
    bool stage(const std::string& name, const std::string& key_material,
               const std::vector<std::string>& outputs, const std::function<void()>& body) {
        const std::string key = sha256_hex(std::string(kCodeVersion) + "|" + name + "|" + key_material);
        stage_keys_[name] = key;
        const fs::path marker = cache_ / (sanitize(name) + ".json");

        if (fs::exists(marker)) {
            try {
                json m = io::read_json_file(marker.string());
                if (m.value("key", "") == key && outputs_match(m.at("outputs"))) {
                    std::cout << "[skip] " << name << " (cached)\n";
                    for (const auto& row : m.at("outputs"))
                        record(name, row.at("path").get<std::string>(),
                               row.at("sha256").get<std::string>());
                    return false;
                }
            } catch (const std::exception&) {
                // unreadable marker: fall through and re-run
            }
        }

        std::cout << "[run ] " << name << "\n" << std::flush;
        body();

        json rows = json::array();
        for (const auto& out : outputs)
            for (const auto& [rel, hash] : hash_tree(out)) {
                rows.push_back(json{{"path", rel}, {"sha256", hash}});
                record(name, rel, hash);
            }
        io::write_json_file(json{{"key", key}, {"outputs", rows}}, marker.string());
        return true;
    }

    const std::string& key_of(const std::string& stage_name) const {
        return stage_keys_.at(stage_name);
    }

    void write_run_manifest() const {
        io::write_json_file(json{{"schema", "holofocus-run/1"}, {"artifacts", artifacts_}},
                            (out_ / "run_manifest.json").string());
    }

private:
    static std::string sanitize(std::string s) {
        for (char& c : s)
            if (c == ':' || c == '/') c = '_';
        return s;
    }

    // files under out_/<rel>; directories are walked in sorted order
    std::vector<std::pair<std::string, std::string>> hash_tree(const std::string& rel) const {
        std::vector<std::pair<std::string, std::string>> rows;
        const fs::path p = out_ / rel;
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& it : fs::recursive_directory_iterator(p))
                if (it.is_regular_file()) files.push_back(it.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files)
                rows.emplace_back(fs::relative(f, out_).string(), sha256_file_hex(f.string()));
        } else if (fs::is_regular_file(p)) {
            rows.emplace_back(rel, sha256_file_hex(p.string()));
        } else {
            throw IoError("stage output missing: " + p.string());
        }
        return rows;
    }

    bool outputs_match(const json& rows) const {
        for (const auto& row : rows) {
            const fs::path p = out_ / row.at("path").get<std::string>();
            if (!fs::is_regular_file(p)) return false;
            if (sha256_file_hex(p.string()) != row.at("sha256").get<std::string>()) return false;
        }
        return true;
    }

    void record(const std::string& stage, const std::string& rel, const std::string& hash) {
        artifacts_.push_back(json{{"path", rel}, {"sha256", hash}, {"stage", stage}});
    }

    fs::path out_;
    fs::path cache_;
    std::map<std::string, std::string> stage_keys_;
    json artifacts_ = json::array();
};

json scenario_to_json(const ScenarioEntry& s) {
    return json{{"tag", to_string(s.scenario.tag)},
                {"roi_anchor", to_string(s.scenario.roi_anchor)},
                {"roi_size", s.scenario.roi_size},
                {"out_size", s.out_size}};
}

json config_fingerprint(const ExperimentConfig& c) {
    json scenarios = json::array();
    for (const auto& s : c.scenarios) scenarios.push_back(scenario_to_json(s));
    json models = json::array();
    for (const auto& m : c.models)
        models.push_back(json{{"name", m.name}, {"family", m.family}, {"config", m.config}});
    return json{{"seed", c.seed},
                {"optics", io::optics_to_json(c.optics)},
                {"target",
                 json{{"bits_x", c.target_bits_x},
                      {"bits_y", c.target_bits_y},
                      {"cell_px", c.target_cell_px},
                      {"amp_low", c.target_amp_low},
                      {"amp_high", c.target_amp_high}}},
                {"dataset", io::dataset_spec_to_json(c.dataset)},
                {"scenarios", scenarios},
                {"models", models},
                {"train",
                 json{{"max_epochs", c.train.max_epochs},
                      {"patience", c.train.patience},
                      {"batch_size", c.train.batch_size},
                      {"lr", c.train.lr},
                      {"train_frac", c.train_frac},
                      {"test_per_class", c.test_per_class}}}};
}

} // namespace

void run_pipeline(const ExperimentConfig& config_in, const PipelineOptions& opts) {
    ExperimentConfig config = config_in;
    if (opts.seed_override) config.seed = *opts.seed_override;
    if (opts.threads > 0) set_thread_count(opts.threads);

    const fs::path out(opts.out_dir);
    fs::path cache = opts.cache_dir.empty() ? out / ".cache" : fs::path(opts.cache_dir);
    if (const char* env = std::getenv("HOLOFOCUS_CACHE")) cache = env;
    StageRunner runner(out, cache);

    const json fingerprint = config_fingerprint(config);

    std::string current_stage = "setup";
    try {
        // ---- simulate ----
        current_stage = "simulate";
        DatasetSpec dspec = config.dataset;
        dspec.seed = pipeline_seed(config, "simulate");
        const json sim_key = json{{"optics", fingerprint.at("optics")},
                                  {"target", fingerprint.at("target")},
                                  {"dataset", io::dataset_spec_to_json(dspec)}};
        runner.stage("simulate", sim_key.dump(), {"raw"}, [&] {
            build_raw_dataset(config.build_target(), config.optics, dspec, (out / "raw").string());
        });

        // ---- preprocess + split per scenario ----
        std::map<std::string, std::string> scen_dirs;
        for (const auto& s : config.scenarios) {
            const std::string sname = s.name();
            const std::string dir = "data/" + sname;
            scen_dirs[sname] = dir;

            current_stage = "preprocess:" + sname;
            const json pre_key = json{{"parent", runner.key_of("simulate")},
                                      {"scenario", scenario_to_json(s)}};
            runner.stage(current_stage, pre_key.dump(), {dir}, [&] {
                io::DatasetManifest raw =
                    io::load_manifest((out / "raw" / "manifest.json").string());
                make_scenario_dataset(raw, s.scenario, s.out_size, (out / dir).string());
            });

            current_stage = "split:" + sname;
            SplitSpec split_spec;
            split_spec.train_frac = config.train_frac;
            split_spec.test_per_class = config.test_per_class;
            split_spec.seed = pipeline_seed(config, "split");
            const json split_key = json{{"parent", runner.key_of("preprocess:" + sname)},
                                        {"train_frac", split_spec.train_frac},
                                        {"test_per_class", split_spec.test_per_class},
                                        {"seed", split_spec.seed}};
            runner.stage(current_stage, split_key.dump(),
                         {dir + "/split_train.json", dir + "/split_val.json",
                          dir + "/split_test.json"},
                         [&] {
                             io::DatasetManifest scen =
                                 io::load_manifest((out / dir / "manifest.json").string());
                             SplitResult split = split_dataset(scen, split_spec);
                             io::save_manifest(split.train,
                                               (out / dir / "split_train.json").string());
                             io::save_manifest(split.val, (out / dir / "split_val.json").string());
                             io::save_manifest(split.test,
                                               (out / dir / "split_test.json").string());
                         });
        }

        // ---- train + eval + explain per (model, scenario) ----
        json robustness = json::array();
        for (const auto& me : config.models) {
            for (const auto& s : config.scenarios) {
                const std::string sname = s.name();
                const std::string job = me.name + "_" + sname;
                const std::string model_dir = "models/" + job;

                current_stage = "train:" + job;
                TrainSpec tspec = config.train;
                tspec.seed = pipeline_seed(config, "train:" + job);
                const std::uint64_t model_seed = pipeline_seed(config, "model:" + job);
                const json train_key = json{{"parent", runner.key_of("split:" + sname)},
                                            {"model", json{{"family", me.family},
                                                           {"config", me.config}}},
                                            {"model_seed", model_seed},
                                            {"train",
                                             json{{"max_epochs", tspec.max_epochs},
                                                  {"patience", tspec.patience},
                                                  {"batch_size", tspec.batch_size},
                                                  {"lr", tspec.lr},
                                                  {"seed", tspec.seed}}}};
                runner.stage(current_stage, train_key.dump(), {model_dir}, [&] {
                    const std::string dir = scen_dirs.at(sname);
                    ImageSet train_set = load_image_set(
                        io::load_manifest((out / dir / "split_train.json").string()));
                    ImageSet val_set = load_image_set(
                        io::load_manifest((out / dir / "split_val.json").string()));
                    ModelGraph<float> model =
                        build_model_from_json<float>(me.family, me.config, model_seed);
                    TrainResult res = train_classifier(model, train_set, val_set, tspec);

                    fs::create_directories(out / model_dir);
                    save_history_csv(res.history, (out / model_dir / "history.csv").string());
                    io::save_checkpoint(model, (out / model_dir / "checkpoint").string(),
                                        res.best_epoch,
                                        json{{"scenario", sname},
                                             {"best_val_loss", res.best_val_loss},
                                             {"stopped_early", res.stopped_early},
                                             {"epochs_run", res.history.size()}});
                    json summary{{"model", me.name},
                                 {"scenario", sname},
                                 {"best_epoch", res.best_epoch},
                                 {"best_val_loss", res.best_val_loss},
                                 {"epochs_run", res.history.size()},
                                 {"final_val_accuracy",
                                  res.history.empty() ? 0.0 : res.history.back().val_accuracy}};
                    io::write_json_file(summary,
                                        (out / model_dir / "train_summary.json").string());
                });

                // evaluation on each requested anchor
                json anchor_acc = json::object();
                for (RoiAnchor anchor : config.eval_anchors) {
                    const std::string aname = to_string(anchor);
                    current_stage = "eval:" + job + ":" + aname;
                    const std::string eval_base = "eval/" + job + "_" + aname;
                    const json eval_key =
                        json{{"parent", runner.key_of("train:" + job)}, {"anchor", aname}};
                    runner.stage(current_stage, eval_key.dump(),
                                 {eval_base + ".json", eval_base + "_confusion.png",
                                  eval_base + "_error_hist.png"},
                                 [&] {
                                     fs::create_directories(out / "eval");
                                     const std::string dir = scen_dirs.at(sname);
                                     io::DatasetManifest test_manifest = io::load_manifest(
                                         (out / dir / "split_test.json").string());
                                     ImageSet test_set =
                                         load_image_set_with_anchor(test_manifest, anchor);
                                     ModelGraph<float> model = io::load_checkpoint(
                                         (out / model_dir / "checkpoint").string());
                                     EvalReport rep = evaluate_classifier(model, test_set);
                                     io::write_json_file(rep.to_json(),
                                                         (out / (eval_base + ".json")).string());
                                     io::render_confusion_png(
                                         rep.confusion,
                                         (out / (eval_base + "_confusion.png")).string());
                                     io::render_histogram_png(
                                         rep.distance_error_hist,
                                         (out / (eval_base + "_error_hist.png")).string());
                                 });
                    json rep = io::read_json_file((out / (eval_base + ".json")).string());
                    anchor_acc[aname] = rep.at("accuracy");
                }
                robustness.push_back(json{{"model", me.name},
                                          {"family", me.family},
                                          {"scenario", sname},
                                          {"accuracy_by_anchor", anchor_acc}});

                // explainability samples
                if (config.explain_images > 0) {
                    current_stage = "explain:" + job;
                    const std::string exp_dir = "explain/" + job;
                    const json exp_key = json{{"parent", runner.key_of("train:" + job)},
                                              {"n_images", config.explain_images},
                                              {"method", to_string(config.attention_method)}};
                    runner.stage(current_stage, exp_key.dump(), {exp_dir}, [&] {
                        fs::create_directories(out / exp_dir);
                        const std::string dir = scen_dirs.at(sname);
                        io::DatasetManifest test_manifest =
                            io::load_manifest((out / dir / "split_test.json").string());
                        ImageSet test_set = load_image_set(test_manifest);
                        ModelGraph<float> model =
                            io::load_checkpoint((out / model_dir / "checkpoint").string());

                        const int n = std::min<int>(config.explain_images,
                                                    static_cast<int>(test_set.size()));
                        json entropy_rows = json::array();
                        for (int i = 0; i < n; ++i) {
                            Image img(test_set.image_size, test_set.image_size);
                            for (size_t p = 0; p < img.size(); ++p)
                                img.pix[p] = test_set.images[static_cast<size_t>(i)][p];
                            Image heat;
                            if (me.family == "cnn") {
                                heat = grad_cam(model, img, test_set.labels[static_cast<size_t>(i)]);
                            } else {
                                heat = attention_map(model, img, config.attention_method);
                            }
                            const std::string base =
                                exp_dir + "/sample" + std::to_string(i);
                            emit_overlay(img, heat, (out / (base + "_overlay.png")).string());
                            save_heatmap_csv(heat, (out / (base + "_heatmap.csv")).string());
                            entropy_rows.push_back(json{{"index", i},
                                                        {"label",
                                                         test_set.labels[static_cast<size_t>(i)]},
                                                        {"spatial_entropy_bits",
                                                         spatial_entropy(heat)}});
                        }
                        io::write_json_file(
                            json{{"model", me.name},
                                 {"family", me.family},
                                 {"method",
                                  me.family == "cnn" ? "gradcam"
                                                     : to_string(config.attention_method)},
                                 {"images", entropy_rows}},
                            (out / exp_dir / "entropy_summary.json").string());
                    });
                }
            }
        }

        // ---- cross-anchor robustness summary ----
        current_stage = "report";
        io::write_json_file(json{{"schema", "holofocus-robustness/1"}, {"rows", robustness}},
                            (out / "eval" / "robustness_report.json").string());

        runner.write_run_manifest();
    } catch (const std::exception& e) {
        runner.write_run_manifest();
        throw Error("stage '" + current_stage + "' failed: " + e.what());
    }
}

} // namespace holo
