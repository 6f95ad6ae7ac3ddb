#include "holofocus/focus.hpp"

#include <array>
#include <cmath>

#include "holofocus/common.hpp"

namespace holo {

const char* to_string(FocusMetricKind k) {
    return k == FocusMetricKind::variance ? "variance" : "entropy";
}

FocusMetricKind focus_metric_from_string(const std::string& s) {
    if (s == "variance") return FocusMetricKind::variance;
    if (s == "entropy") return FocusMetricKind::entropy;
    throw ConfigError("unknown focus metric '" + s + "' (expected variance|entropy)");
}

double focus_metric(const Image& image, FocusMetricKind kind) {
    if (image.size() == 0) throw InvalidConfig("focus_metric on empty image");
    if (kind == FocusMetricKind::variance) return image_variance(image);

    const double lo = image_min(image), hi = image_max(image);
    std::array<std::int64_t, 256> bins{};
    if (hi > lo) {
        const double scale = 255.999 / (hi - lo);
        for (double v : image.pix) ++bins[static_cast<size_t>((v - lo) * scale)];
    } else {
        bins[0] = static_cast<std::int64_t>(image.size());
    }
    const double n = static_cast<double>(image.size());
    double h = 0.0;
    for (std::int64_t count : bins) {
        if (count == 0) continue;
        const double p = count / n;
        h -= p * std::log2(p);
    }
    return h;
}

SweepResult autofocus_sweep(const Hologram& holo, double z_min, double z_max, double step,
                            FocusMetricKind kind, const SweepOptions& opts) {
    if (step <= 0) throw InvalidConfig("sweep step must be positive");
    if (z_min > z_max) throw EmptySweep("z_min exceeds z_max");
    const int n_points = static_cast<int>(std::floor((z_max - z_min) / step + 1e-9)) + 1;
    if (n_points <= 0) throw EmptySweep("sweep grid is empty");

    int roi = opts.metric_roi > 0 ? opts.metric_roi : holo.config.grid_size / 2;
    roi = std::min(roi, holo.config.grid_size);

    SweepResult res;
    res.kind = kind;
    res.convention = kind == FocusMetricKind::variance ? "argmax" : "argmin";
    res.curve.resize(static_cast<size_t>(n_points));

    parallel_for(n_points, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            const double z = z_min + static_cast<double>(i) * step;
            Image rec = reconstruct_at(holo, z);
            Image center = crop_roi(rec, RoiAnchor::center, roi);
            res.curve[static_cast<size_t>(i)] = {z, focus_metric(center, kind)};
        }
    });

    size_t best = 0;
    for (size_t i = 1; i < res.curve.size(); ++i) {
        const bool better = kind == FocusMetricKind::variance
                                ? res.curve[i].metric > res.curve[best].metric
                                : res.curve[i].metric < res.curve[best].metric;
        if (better) best = i; // strict comparison: ties keep the smaller z
    }
    res.z_best_um = res.curve[best].z_um;
    return res;
}

} // namespace holo
