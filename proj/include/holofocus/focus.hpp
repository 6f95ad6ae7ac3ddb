#pragma once

#include <string>
#include <vector>

#include "holofocus/optics.hpp"

namespace holo {

enum class FocusMetricKind { variance, entropy };

const char* to_string(FocusMetricKind k);
FocusMetricKind focus_metric_from_string(const std::string& s);

// variance: population variance of pixel values.
// entropy: Shannon entropy in bits of the 256-bin histogram after min-max
// mapping to [0,1]; a constant image occupies one bin and scores 0.
double focus_metric(const Image& image, FocusMetricKind kind);

struct SweepPoint {
    double z_um;
    double metric;
};

struct SweepResult {
    double z_best_um = 0.0;
    std::vector<SweepPoint> curve;
    FocusMetricKind kind = FocusMetricKind::variance;
    // "argmax" for variance, "argmin" for entropy: a sharp amplitude image
    // of a two-level target concentrates the histogram.
    std::string convention;
};

struct SweepOptions {
    // Metric is evaluated on a centered ROI of the reconstruction to keep
    // border wrap-around out of the score; 0 means grid_size / 2.
    int metric_roi = 0;
};

// Reconstructs on the inclusive grid z_min, z_min+step, ..., <= z_max and
// picks the extremal metric; ties break toward smaller z. Reconstructions
// are independent and run on the worker pool.
SweepResult autofocus_sweep(const Hologram& holo, double z_min, double z_max, double step,
                            FocusMetricKind kind, const SweepOptions& opts = {});

} // namespace holo
