#pragma once

#include <limits>

#include <json.hpp>

#include "holofocus/io/manifest.hpp"
#include "holofocus/models.hpp"
#include "holofocus/preprocess.hpp"

namespace holo {

// Test images are removed first (test_per_class each), then the remainder
// splits train_frac / (1 - train_frac), stratified per class.
struct SplitSpec {
    double train_frac = 0.8;
    int test_per_class = 20;
    std::uint64_t seed = 0;
};

struct SplitResult {
    io::DatasetManifest train;
    io::DatasetManifest val;
    io::DatasetManifest test;
};

SplitResult split_dataset(const io::DatasetManifest& manifest, const SplitSpec& spec);

struct TrainSpec {
    int max_epochs = 200;
    int patience = 20;
    int batch_size = 32;
    double lr = 1e-4;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

// Stops once validation loss has not strictly improved for `patience`
// epochs; ties count as no improvement, so the earliest best epoch wins.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    bool observe(int epoch, double val_loss) {
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return false;
    }

    bool should_stop() const { return stale_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    int stale_ = 0;
    int best_epoch_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

// Decoded dataset held in memory; images are image_size^2 floats in [0,1].
struct ImageSet {
    int image_size = 0;
    int n_classes = 0;
    double z_step_um = 1.0;
    std::string scenario;
    std::string roi_anchor;
    std::vector<std::vector<float>> images;
    std::vector<int> labels;
    std::vector<double> z_true_um;
    std::vector<std::string> paths;

    size_t size() const { return images.size(); }
};

ImageSet load_image_set(const io::DatasetManifest& m);

// Re-derives the set from the raw holograms with a different ROI anchor but
// the same scenario filters. Throws MissingRawImages when the manifest has
// no raw sources.
ImageSet load_image_set_with_anchor(const io::DatasetManifest& m, RoiAnchor anchor);

// Trains with Adam and early stopping; the weights of the best
// validation-loss epoch are restored before returning.
TrainResult train_classifier(ModelGraph<float>& model, const ImageSet& train, const ImageSet& val,
                             const TrainSpec& spec);

std::vector<int> predict_all(const ModelGraph<float>& model, const ImageSet& set,
                             int batch_size = 64);

// (mean loss, accuracy)
std::pair<double, double> eval_loss_accuracy(const ModelGraph<float>& model, const ImageSet& set,
                                             int batch_size = 64);

struct EvalReport {
    std::string scenario;
    std::string roi_anchor;
    int n_classes = 0;
    int test_per_class = 0;
    double z_step_um = 1.0;
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<std::vector<int>> confusion;  // [true][predicted]
    std::vector<int> distance_error_hist;     // index = class error, bin width z_step
    int max_abs_class_error = 0;
    double mean_abs_error_um = 0.0;
    std::vector<EpochStats> val_history; // filled when training history is available

    nlohmann::json to_json() const;
};

// Pure scoring core; stubs and trained models share it.
EvalReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& labels,
                                int n_classes, double z_step_um, const std::string& scenario,
                                const std::string& roi_anchor);

EvalReport evaluate_classifier(const ModelGraph<float>& model, const ImageSet& test);

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path);

} // namespace holo
