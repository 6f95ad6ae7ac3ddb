#include "holofocus/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "holofocus/io/csv.hpp"
#include "holofocus/io/png_io.hpp"
#include "holofocus/nn/adam.hpp"
#include "holofocus/nn/loss.hpp"

namespace holo {

namespace fs = std::filesystem;
using nlohmann::json;

SplitResult split_dataset(const io::DatasetManifest& manifest, const SplitSpec& spec) {
    if (spec.train_frac <= 0.0 || spec.train_frac >= 1.0)
        throw InvalidConfig("train_frac must be in (0,1)");
    const int n_classes = manifest.dataset.n_classes;
    std::vector<std::vector<size_t>> by_class(static_cast<size_t>(n_classes));
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const int c = manifest.entries[i].class_label;
        if (c < 0 || c >= n_classes)
            throw LabelOutOfRange("manifest label " + std::to_string(c) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
        by_class[static_cast<size_t>(c)].push_back(i);
    }

    SplitResult res;
    for (auto* part : {&res.train, &res.val, &res.test}) {
        part->optics = manifest.optics;
        part->dataset = manifest.dataset;
        part->scenario = manifest.scenario;
        part->roi_anchor = manifest.roi_anchor;
        part->image_size = manifest.image_size;
        part->roi_size = manifest.roi_size;
        part->root_dir = manifest.root_dir;
    }

    for (int c = 0; c < n_classes; ++c) {
        auto& idx = by_class[static_cast<size_t>(c)];
        if (static_cast<int>(idx.size()) < spec.test_per_class + 5)
            throw InsufficientData("class " + std::to_string(c) + " has only " +
                                   std::to_string(idx.size()) + " images; needs at least " +
                                   std::to_string(spec.test_per_class + 5));
        Rng rng(seed_stream(spec.seed, "split", static_cast<std::uint64_t>(c)));
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[static_cast<size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);

        const size_t n_test = static_cast<size_t>(spec.test_per_class);
        const size_t remaining = idx.size() - n_test;
        const size_t n_train = static_cast<size_t>(std::floor(spec.train_frac * static_cast<double>(remaining)));
        for (size_t i = 0; i < idx.size(); ++i) {
            const io::ManifestEntry& e = manifest.entries[idx[i]];
            if (i < n_test)
                res.test.entries.push_back(e);
            else if (i < n_test + n_train)
                res.train.entries.push_back(e);
            else
                res.val.entries.push_back(e);
        }
    }
    return res;
}

namespace {

std::vector<float> decode_entry(const io::DatasetManifest& m, const io::ManifestEntry& e,
                                int expect_size) {
    Image img = io::load_unit_png(m.image_path(e));
    if (img.height != expect_size || img.width != expect_size)
        throw ShapeMismatch("image " + e.path + " is " + std::to_string(img.height) + "x" +
                            std::to_string(img.width) + ", manifest says " +
                            std::to_string(expect_size));
    std::vector<float> out(img.size());
    for (size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(img.pix[i]);
    return out;
}

void fill_common(ImageSet& set, const io::DatasetManifest& m) {
    set.image_size = m.image_size;
    set.n_classes = m.dataset.n_classes;
    set.z_step_um = m.dataset.z_step_um;
    set.scenario = m.scenario;
    set.roi_anchor = m.roi_anchor;
}

} // namespace

ImageSet load_image_set(const io::DatasetManifest& m) {
    ImageSet set;
    fill_common(set, m);
    set.images.resize(m.entries.size());
    set.labels.resize(m.entries.size());
    set.z_true_um.resize(m.entries.size());
    set.paths.resize(m.entries.size());
    parallel_for(static_cast<std::int64_t>(m.entries.size()),
                 [&](std::int64_t b, std::int64_t e2) {
                     for (std::int64_t i = b; i < e2; ++i) {
                         const io::ManifestEntry& e = m.entries[static_cast<size_t>(i)];
                         set.images[static_cast<size_t>(i)] = decode_entry(m, e, m.image_size);
                         set.labels[static_cast<size_t>(i)] = e.class_label;
                         set.z_true_um[static_cast<size_t>(i)] = e.z_true_um;
                         set.paths[static_cast<size_t>(i)] = e.path;
                     }
                 });
    return set;
}

ImageSet load_image_set_with_anchor(const io::DatasetManifest& m, RoiAnchor anchor) {
    if (m.roi_anchor == to_string(anchor)) return load_image_set(m);
    if (m.scenario == "RAW")
        throw MissingRawImages("raw manifests have no scenario to re-anchor");

    Scenario sc;
    sc.tag = scenario_tag_from_string(m.scenario);
    sc.roi_anchor = anchor;
    // recover the pre-downsample ROI size from the raw grid: the ROI scales
    // with the raw image, so re-derive from the stored raw sources
    sc.roi_size = 0;

    ImageSet set;
    fill_common(set, m);
    set.roi_anchor = to_string(anchor);
    set.images.resize(m.entries.size());
    set.labels.resize(m.entries.size());
    set.z_true_um.resize(m.entries.size());
    set.paths.resize(m.entries.size());

    parallel_for(static_cast<std::int64_t>(m.entries.size()), [&](std::int64_t b, std::int64_t e2) {
        for (std::int64_t i = b; i < e2; ++i) {
            const io::ManifestEntry& e = m.entries[static_cast<size_t>(i)];
            if (e.source_raw.empty())
                throw MissingRawImages("entry " + e.path + " records no raw source");
            const std::string raw_path = m.root_dir + "/" + e.source_raw;
            if (!fs::exists(raw_path))
                throw MissingRawImages("raw image missing: " + raw_path);
            Image raw = io::load_unit_png(raw_path);
            Scenario local = sc;
            local.roi_size = m.roi_size > 0 ? m.roi_size : m.image_size;
            Image out = apply_scenario(raw, local, m.image_size, anchor);
            std::vector<float>& dst = set.images[static_cast<size_t>(i)];
            dst.resize(out.size());
            for (size_t p = 0; p < out.size(); ++p) dst[p] = static_cast<float>(out.pix[p]);
            set.labels[static_cast<size_t>(i)] = e.class_label;
            set.z_true_um[static_cast<size_t>(i)] = e.z_true_um;
            set.paths[static_cast<size_t>(i)] = e.path;
        }
    });
    return set;
}

namespace {

nn::Tensor<float> batch_tensor(const ImageSet& set, const std::vector<size_t>& order, size_t begin,
                               size_t end) {
    const int s = set.image_size;
    const int n = static_cast<int>(end - begin);
    nn::Tensor<float> x({n, 1, s, s});
    for (size_t i = begin; i < end; ++i) {
        const std::vector<float>& img = set.images[order[i]];
        std::copy(img.begin(), img.end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>((i - begin) * img.size()));
    }
    return x;
}

std::vector<std::vector<float>> snapshot_params(const std::vector<nn::ParamRef<float>>& params) {
    std::vector<std::vector<float>> snap;
    snap.reserve(params.size());
    for (const auto& p : params) snap.push_back(p.value->data);
    return snap;
}

void restore_params(const std::vector<nn::ParamRef<float>>& params,
                    const std::vector<std::vector<float>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i].value->data = snap[i];
}

} // namespace

std::vector<int> predict_all(const ModelGraph<float>& model, const ImageSet& set, int batch_size) {
    std::vector<size_t> order(set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<int> pred(set.size());
    for (size_t b = 0; b < set.size(); b += static_cast<size_t>(batch_size)) {
        const size_t e = std::min(set.size(), b + static_cast<size_t>(batch_size));
        nn::Tensor<float> x = batch_tensor(set, order, b, e);
        nn::Tensor<float> logits = model.forward(x, nn::Mode::infer);
        std::vector<int> rows = nn::argmax_rows(logits);
        std::copy(rows.begin(), rows.end(), pred.begin() + static_cast<std::ptrdiff_t>(b));
    }
    return pred;
}

std::pair<double, double> eval_loss_accuracy(const ModelGraph<float>& model, const ImageSet& set,
                                             int batch_size) {
    std::vector<size_t> order(set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (size_t b = 0; b < set.size(); b += static_cast<size_t>(batch_size)) {
        const size_t e = std::min(set.size(), b + static_cast<size_t>(batch_size));
        nn::Tensor<float> x = batch_tensor(set, order, b, e);
        std::vector<int> labels(set.labels.begin() + static_cast<std::ptrdiff_t>(b),
                                set.labels.begin() + static_cast<std::ptrdiff_t>(e));
        nn::Tensor<float> logits = model.forward(x, nn::Mode::infer);
        auto res = nn::cross_entropy_loss(logits, labels);
        loss_sum += res.loss * static_cast<double>(e - b);
        std::vector<int> rows = nn::argmax_rows(logits);
        for (size_t i = 0; i < rows.size(); ++i)
            if (rows[i] == labels[i]) ++correct;
    }
    const double n = static_cast<double>(set.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train_classifier(ModelGraph<float>& model, const ImageSet& train, const ImageSet& val,
                             const TrainSpec& spec) {
    if (train.size() == 0 || val.size() == 0)
        throw InsufficientData("train/val sets must be non-empty");
    if (train.image_size != model.input_size)
        throw ShapeMismatch("train images are " + std::to_string(train.image_size) +
                            "px, model expects " + std::to_string(model.input_size));
    if (spec.batch_size < 1) throw InvalidConfig("batch_size must be positive");

    nn::Adam<float> opt(spec.lr);
    auto params = model.params();
    EarlyStopper stopper(spec.patience);
    TrainResult result;
    std::vector<std::vector<float>> best_weights = snapshot_params(params);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
        // per-epoch permutation keyed by (seed, epoch)
        Rng shuffle_rng(seed_stream(spec.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<std::int64_t>(i)))]);

        double loss_sum = 0.0;
        for (size_t b = 0; b < train.size(); b += static_cast<size_t>(spec.batch_size)) {
            const size_t e = std::min(train.size(), b + static_cast<size_t>(spec.batch_size));
            nn::Tensor<float> x = batch_tensor(train, order, b, e);
            std::vector<int> labels(e - b);
            for (size_t i = b; i < e; ++i) labels[i - b] = train.labels[order[i]];

            model.zero_grads();
            std::vector<nn::Cache<float>> caches;
            nn::Tensor<float> logits = model.forward_collect(x, caches);
            auto res = nn::cross_entropy_loss(logits, labels);
            if (!std::isfinite(res.loss))
                throw DivergenceDetected("loss became non-finite at epoch " +
                                         std::to_string(epoch));
            model.backward(caches, res.grad_logits);
            opt.step(params);
            loss_sum += res.loss * static_cast<double>(e - b);
        }

        auto [val_loss, val_acc] = eval_loss_accuracy(model, val, spec.batch_size);
        if (!std::isfinite(val_loss))
            throw DivergenceDetected("validation loss became non-finite at epoch " +
                                     std::to_string(epoch));
        result.history.push_back(
            {epoch, loss_sum / static_cast<double>(train.size()), val_loss, val_acc});

        if (stopper.observe(epoch, val_loss)) best_weights = snapshot_params(params);
        if (stopper.should_stop()) {
            result.stopped_early = true;
            break;
        }
    }

    restore_params(params, best_weights);
    result.best_epoch = stopper.best_epoch();
    result.best_val_loss = stopper.best_loss();
    return result;
}

EvalReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& labels,
                                int n_classes, double z_step_um, const std::string& scenario,
                                const std::string& roi_anchor) {
    if (predicted.size() != labels.size())
        throw ShapeMismatch("predictions and labels differ in length");
    EvalReport r;
    r.scenario = scenario;
    r.roi_anchor = roi_anchor;
    r.n_classes = n_classes;
    r.z_step_um = z_step_um;
    r.confusion.assign(static_cast<size_t>(n_classes),
                       std::vector<int>(static_cast<size_t>(n_classes), 0));
    r.distance_error_hist.assign(static_cast<size_t>(n_classes), 0);

    std::vector<int> per_class_total(static_cast<size_t>(n_classes), 0);
    std::vector<int> per_class_correct(static_cast<size_t>(n_classes), 0);
    double err_um_sum = 0.0;
    int correct = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
        const int t = labels[i], p = predicted[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
            throw LabelOutOfRange("class index outside [0, " + std::to_string(n_classes) + ")");
        ++r.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
        ++per_class_total[static_cast<size_t>(t)];
        const int err = std::abs(p - t);
        ++r.distance_error_hist[static_cast<size_t>(err)];
        r.max_abs_class_error = std::max(r.max_abs_class_error, err);
        err_um_sum += err * z_step_um;
        if (err == 0) {
            ++correct;
            ++per_class_correct[static_cast<size_t>(t)];
        }
    }
    const double n = static_cast<double>(labels.size());
    r.accuracy = n > 0 ? correct / n : 0.0;
    r.mean_abs_error_um = n > 0 ? err_um_sum / n : 0.0;
    r.per_class_accuracy.resize(static_cast<size_t>(n_classes), 0.0);
    for (int c = 0; c < n_classes; ++c)
        if (per_class_total[static_cast<size_t>(c)] > 0)
            r.per_class_accuracy[static_cast<size_t>(c)] =
                static_cast<double>(per_class_correct[static_cast<size_t>(c)]) /
                per_class_total[static_cast<size_t>(c)];
    r.test_per_class = labels.empty() ? 0 : per_class_total[0];
    return r;
}

EvalReport evaluate_classifier(const ModelGraph<float>& model, const ImageSet& test) {
    std::vector<int> pred = predict_all(model, test);
    return evaluate_predictions(pred, test.labels, test.n_classes, test.z_step_um, test.scenario,
                                test.roi_anchor);
}

json EvalReport::to_json() const {
    json hist = json::array();
    for (const auto& h : val_history)
        hist.push_back(json{{"epoch", h.epoch},
                            {"train_loss", h.train_loss},
                            {"val_loss", h.val_loss},
                            {"val_accuracy", h.val_accuracy}});
    json err_hist = json::array();
    for (size_t i = 0; i < distance_error_hist.size(); ++i)
        err_hist.push_back(json{{"abs_class_error", i},
                                {"distance_error_um", static_cast<double>(i) * z_step_um},
                                {"count", distance_error_hist[i]}});
    return json{{"scenario", scenario},
                {"roi_anchor", roi_anchor},
                {"n_classes", n_classes},
                {"test_per_class", test_per_class},
                {"z_step_um", z_step_um},
                {"accuracy", accuracy},
                {"per_class_accuracy", per_class_accuracy},
                {"confusion_matrix", confusion},
                {"distance_error_histogram", err_hist},
                {"max_abs_class_error", max_abs_class_error},
                {"max_abs_error_um", max_abs_class_error * z_step_um},
                {"mean_abs_error_um", mean_abs_error_um},
                {"val_history", hist}};
}

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    io::CsvWriter csv({"epoch", "train_loss", "val_loss", "val_acc"});
    for (const auto& h : history)
        csv.add_row({static_cast<double>(h.epoch), h.train_loss, h.val_loss, h.val_accuracy});
    csv.save(path);
}

} // namespace holo
