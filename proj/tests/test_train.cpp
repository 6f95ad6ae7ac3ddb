#include <doctest.h>

#include <set>

#include "holofocus/dataset.hpp"
#include "holofocus/train.hpp"
#include "test_util.hpp"

using namespace holo;

namespace {

// manifest with fake paths; fine for split logic, which never opens files
io::DatasetManifest synthetic_manifest(int n_classes, int per_class) {
    io::DatasetManifest m;
    m.dataset.n_classes = n_classes;
    m.dataset.per_class = per_class;
    m.dataset.z0_um = 50;
    m.dataset.z_step_um = 1;
    m.scenario = "NSO";
    m.roi_anchor = "center";
    m.image_size = 8;
    for (int c = 0; c < n_classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            io::ManifestEntry e;
            e.path = "images/c" + std::to_string(c) + "_" + std::to_string(i) + ".png";
            e.class_label = c;
            e.z_true_um = 50.0 + c;
            m.entries.push_back(e);
        }
    return m;
}

std::set<std::string> path_set(const io::DatasetManifest& m) {
    std::set<std::string> s;
    for (const auto& e : m.entries) s.insert(e.path);
    return s;
}

} // namespace

TEST_CASE("split_dataset: full-scale allocation arithmetic (10 x 360, 20 test)") {
    auto m = synthetic_manifest(10, 360);
    SplitSpec spec;
    spec.test_per_class = 20;
    spec.seed = 4;
    auto split = split_dataset(m, spec);

    CHECK(split.test.entries.size() == 200);
    CHECK(split.train.entries.size() == 2720); // 10 * floor(0.8 * 340)
    CHECK(split.val.entries.size() == 680);

    // per class: 340 remain -> 272 train, 68 val
    std::vector<int> train_per_class(10, 0), val_per_class(10, 0), test_per_class(10, 0);
    for (const auto& e : split.train.entries) ++train_per_class[static_cast<size_t>(e.class_label)];
    for (const auto& e : split.val.entries) ++val_per_class[static_cast<size_t>(e.class_label)];
    for (const auto& e : split.test.entries) ++test_per_class[static_cast<size_t>(e.class_label)];
    for (int c = 0; c < 10; ++c) {
        CHECK(train_per_class[static_cast<size_t>(c)] == 272);
        CHECK(val_per_class[static_cast<size_t>(c)] == 68);
        CHECK(test_per_class[static_cast<size_t>(c)] == 20);
    }
}

TEST_CASE("split_dataset: disjoint, deterministic, seed-sensitive") {
    auto m = synthetic_manifest(4, 40);
    SplitSpec spec;
    spec.test_per_class = 5;
    spec.seed = 11;
    auto a = split_dataset(m, spec);

    auto train_paths = path_set(a.train), val_paths = path_set(a.val), test_paths = path_set(a.test);
    for (const auto& p : train_paths) {
        CHECK(val_paths.count(p) == 0);
        CHECK(test_paths.count(p) == 0);
    }
    for (const auto& p : val_paths) CHECK(test_paths.count(p) == 0);
    CHECK(train_paths.size() + val_paths.size() + test_paths.size() == m.entries.size());

    auto b = split_dataset(m, spec);
    CHECK(path_set(b.test) == test_paths);
    CHECK(path_set(b.train) == train_paths);

    spec.seed = 12;
    auto c = split_dataset(m, spec);
    CHECK(path_set(c.test) != test_paths);
}

TEST_CASE("split_dataset: insufficient data names the class") {
    auto m = synthetic_manifest(3, 24);
    m.entries.erase(m.entries.begin() + 48, m.entries.end()); // class 2 now empty
    for (int i = 0; i < 10; ++i) {
        io::ManifestEntry e;
        e.path = "images/c2_" + std::to_string(i) + ".png";
        e.class_label = 2;
        m.entries.push_back(e);
    }
    SplitSpec spec;
    spec.test_per_class = 8; // class 2 has 10 < 8 + 5
    try {
        split_dataset(m, spec);
        FAIL("expected InsufficientData");
    } catch (const InsufficientData& e) {
        CHECK(std::string(e.what()).find("class 2") != std::string::npos);
    }
}

TEST_CASE("early stopper: frozen loss stops after patience+1 epochs") {
    EarlyStopper stop(20);
    int epochs = 0;
    for (int e = 1; e <= 200; ++e) {
        epochs = e;
        stop.observe(e, 1.0); // never improves after the first observation
        if (stop.should_stop()) break;
    }
    CHECK(epochs == 21);
    CHECK(stop.best_epoch() == 1);
}

TEST_CASE("early stopper: strictly improving loss never stops; ties keep earlier epoch") {
    EarlyStopper stop(20);
    for (int e = 1; e <= 200; ++e) {
        stop.observe(e, 1.0 / e);
        CHECK_FALSE(stop.should_stop());
    }
    CHECK(stop.best_epoch() == 200);

    EarlyStopper tie(3);
    tie.observe(1, 0.5);
    tie.observe(2, 0.5);
    CHECK(tie.best_epoch() == 1);
}

TEST_CASE("evaluate_predictions: perfect and degenerate stubs") {
    std::vector<int> labels;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 4; ++i) labels.push_back(c);

    EvalReport perfect = evaluate_predictions(labels, labels, 5, 1.0, "NSO", "center");
    CHECK(perfect.accuracy == doctest::Approx(1.0));
    CHECK(perfect.max_abs_class_error == 0);
    for (int c = 0; c < 5; ++c) {
        CHECK(perfect.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)] == 4);
        CHECK(perfect.per_class_accuracy[static_cast<size_t>(c)] == doctest::Approx(1.0));
    }
    CHECK(perfect.distance_error_hist[0] == 20);

    std::vector<int> zeros(labels.size(), 0);
    EvalReport degenerate = evaluate_predictions(zeros, labels, 5, 1.0, "NSO", "center");
    CHECK(degenerate.accuracy == doctest::Approx(0.2)); // 1 / n_classes on balanced labels
    CHECK(degenerate.max_abs_class_error == 4);
    CHECK(degenerate.mean_abs_error_um == doctest::Approx(2.0)); // mean |c| over balanced classes

    // confusion rows sum to the per-class test count
    for (const auto& row : degenerate.confusion) {
        int s = 0;
        for (int v : row) s += v;
        CHECK(s == 4);
    }
}

TEST_CASE("distance error equals class error times z_step") {
    std::vector<int> labels = {0, 1, 2, 3};
    std::vector<int> pred = {0, 3, 2, 1};
    EvalReport r = evaluate_predictions(pred, labels, 4, 2.5, "NSO", "center");
    CHECK(r.max_abs_class_error == 2);
    CHECK(r.mean_abs_error_um == doctest::Approx((0 + 2 + 0 + 2) * 2.5 / 4.0));
    CHECK(r.to_json().at("max_abs_error_um").get<double>() == doctest::Approx(5.0));
}

TEST_CASE("training pipeline on a tiny simulated dataset") {
    testutil::TempDir tmp("train");
    OpticalConfig optics;
    optics.grid_size = 64;
    DatasetSpec spec;
    spec.n_classes = 3;
    spec.per_class = 16;
    spec.noise_sigma = 0.02;
    spec.seed = 21;
    TargetPattern target = generate_target({1, 0, 1, 1}, {0, 1}, 4, optics.grid_size);
    auto raw = build_raw_dataset(target, optics, spec, tmp.str() + "/raw");

    Scenario sc{ScenarioTag::NSO, RoiAnchor::center, 32};
    auto scen = make_scenario_dataset(raw, sc, 16, tmp.str() + "/nso");

    SplitSpec split_spec;
    split_spec.test_per_class = 4;
    split_spec.seed = 3;
    auto split = split_dataset(scen, split_spec);

    ImageSet train_set = load_image_set(split.train);
    ImageSet val_set = load_image_set(split.val);
    ImageSet test_set = load_image_set(split.test);
    CHECK(train_set.size() == 3 * 9);  // floor(0.8 * 12)
    CHECK(val_set.size() == 3 * 3);
    CHECK(test_set.size() == 3 * 4);

    CnnConfig cfg;
    cfg.input_size = 16;
    cfg.blocks = {{8, 1, true}, {16, 1, true}};
    cfg.n_classes = 3;
    auto model = build_small_cnn<float>(cfg, 5);

    TrainSpec tspec;
    tspec.max_epochs = 40;
    tspec.patience = 10;
    tspec.batch_size = 8;
    tspec.lr = 3e-3;
    tspec.seed = 6;
    TrainResult res = train_classifier(model, train_set, val_set, tspec);
    REQUIRE_FALSE(res.history.empty());
    CHECK(res.best_epoch >= 1);
    CHECK(res.best_epoch <= static_cast<int>(res.history.size()));

    // same seeds, same trajectory
    auto model2 = build_small_cnn<float>(cfg, 5);
    TrainResult res2 = train_classifier(model2, train_set, val_set, tspec);
    REQUIRE(res2.history.size() == res.history.size());
    for (size_t i = 0; i < res.history.size(); ++i) {
        CHECK(res.history[i].train_loss == res2.history[i].train_loss);
        CHECK(res.history[i].val_loss == res2.history[i].val_loss);
    }

    EvalReport rep = evaluate_classifier(model, test_set);
    CHECK(rep.n_classes == 3);
    int total = 0;
    for (const auto& row : rep.confusion)
        for (int v : row) total += v;
    CHECK(total == static_cast<int>(test_set.size()));
}

TEST_CASE("bottom-left re-anchoring changes pixels, keeps labels, needs raw sources") {
    testutil::TempDir tmp("anchor");
    OpticalConfig optics;
    optics.grid_size = 64;
    DatasetSpec spec;
    spec.n_classes = 2;
    spec.per_class = 6;
    spec.seed = 31;
    TargetPattern target = generate_target({1, 0, 1}, {1, 1}, 4, optics.grid_size);
    auto raw = build_raw_dataset(target, optics, spec, tmp.str() + "/raw");
    Scenario sc{ScenarioTag::SFO, RoiAnchor::center, 32};
    auto scen = make_scenario_dataset(raw, sc, 16, tmp.str() + "/sfo");

    ImageSet center = load_image_set_with_anchor(scen, RoiAnchor::center);
    ImageSet corner = load_image_set_with_anchor(scen, RoiAnchor::bottom_left);
    REQUIRE(center.size() == corner.size());
    CHECK(center.labels == corner.labels);
    bool any_diff = false;
    for (size_t i = 0; i < center.size(); ++i)
        if (center.images[i] != corner.images[i]) any_diff = true;
    CHECK(any_diff);
    CHECK(corner.roi_anchor == "bottom_left");

    // strip raw sources: corner evaluation becomes impossible
    auto broken = scen;
    for (auto& e : broken.entries) e.source_raw.clear();
    CHECK_THROWS_AS(load_image_set_with_anchor(broken, RoiAnchor::bottom_left),
                    MissingRawImages);
}

TEST_CASE("divergence is detected and reported with the epoch") {
    testutil::TempDir tmp("diverge");
    OpticalConfig optics;
    optics.grid_size = 64;
    DatasetSpec spec;
    spec.n_classes = 2;
    spec.per_class = 8;
    spec.seed = 41;
    TargetPattern target = generate_target({1, 1}, {0, 1}, 4, optics.grid_size);
    auto raw = build_raw_dataset(target, optics, spec, tmp.str() + "/raw");
    Scenario sc{ScenarioTag::NSO, RoiAnchor::center, 16};
    auto scen = make_scenario_dataset(raw, sc, 16, tmp.str() + "/nso");
    SplitSpec split_spec;
    split_spec.test_per_class = 1;
    auto split = split_dataset(scen, split_spec);
    ImageSet train_set = load_image_set(split.train);
    ImageSet val_set = load_image_set(split.val);

    CnnConfig cfg;
    cfg.input_size = 16;
    cfg.blocks = {{4, 1, true}};
    cfg.n_classes = 2;
    auto model = build_small_cnn<float>(cfg, 1);
    // poison the head so the first loss is non-finite
    for (auto& p : model.params())
        if (p.name == "head.weight")
            p.value->fill(std::numeric_limits<float>::quiet_NaN());

    TrainSpec tspec;
    tspec.max_epochs = 3;
    tspec.batch_size = 4;
    CHECK_THROWS_AS(train_classifier(model, train_set, val_set, tspec), DivergenceDetected);
}
