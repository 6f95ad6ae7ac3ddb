#include "holofocus/io/plot.hpp"

#include <algorithm>
#include <cmath>

#include "holofocus/common.hpp"
#include "holofocus/io/png_io.hpp"

namespace holo::io {

namespace {

// anchor colors sampled from the viridis table
constexpr double kAnchors[9][3] = {
    {68, 1, 84},   {72, 36, 117},  {65, 68, 135},  {53, 95, 141},   {42, 120, 142},
    {33, 145, 140}, {34, 168, 132}, {122, 209, 81}, {253, 231, 37},
};

} // namespace

Rgb colormap_viridis(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const double pos = t * 8.0;
    const int i = std::min(7, static_cast<int>(pos));
    const double f = pos - i;
    auto lerp = [&](int ch) {
        return static_cast<std::uint8_t>(
            std::lround(kAnchors[i][ch] + f * (kAnchors[i + 1][ch] - kAnchors[i][ch])));
    };
    return {lerp(0), lerp(1), lerp(2)};
}

void render_confusion_png(const std::vector<std::vector<int>>& confusion,
                          const std::string& path) {
    const int n = static_cast<int>(confusion.size());
    if (n == 0) throw InvalidConfig("empty confusion matrix");
    int max_count = 1;
    for (const auto& row : confusion)
        for (int v : row) max_count = std::max(max_count, v);

    const int cell = 32, border = 1;
    const int img = n * cell + (n + 1) * border;
    std::vector<std::uint8_t> rgb(static_cast<size_t>(img) * img * 3, 255);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const Rgb col =
                colormap_viridis(static_cast<double>(confusion[static_cast<size_t>(r)]
                                                              [static_cast<size_t>(c)]) /
                                 max_count);
            const int y0 = border + r * (cell + border);
            const int x0 = border + c * (cell + border);
            for (int y = y0; y < y0 + cell; ++y)
                for (int x = x0; x < x0 + cell; ++x) {
                    const size_t p = (static_cast<size_t>(y) * img + x) * 3;
                    rgb[p] = col.r;
                    rgb[p + 1] = col.g;
                    rgb[p + 2] = col.b;
                }
        }
    }
    write_png_rgb8(path, rgb, img, img);
}

void render_histogram_png(const std::vector<int>& counts, const std::string& path) {
    const int n = static_cast<int>(counts.size());
    if (n == 0) throw InvalidConfig("empty histogram");
    int max_count = 1;
    for (int v : counts) max_count = std::max(max_count, v);

    const int bar_w = 24, gap = 8, height = 160, base = 8;
    const int width = gap + n * (bar_w + gap);
    const int img_h = height + 2 * base;
    std::vector<std::uint8_t> rgb(static_cast<size_t>(width) * img_h * 3, 255);
    for (int b = 0; b < n; ++b) {
        const int h = static_cast<int>(std::lround(
            static_cast<double>(counts[static_cast<size_t>(b)]) / max_count * height));
        const int x0 = gap + b * (bar_w + gap);
        const Rgb col = colormap_viridis(0.35);
        for (int y = img_h - base - h; y < img_h - base; ++y)
            for (int x = x0; x < x0 + bar_w; ++x) {
                const size_t p = (static_cast<size_t>(y) * width + x) * 3;
                rgb[p] = col.r;
                rgb[p + 1] = col.g;
                rgb[p + 2] = col.b;
            }
    }
    // baseline
    for (int x = 0; x < width; ++x) {
        const size_t p = (static_cast<size_t>(img_h - base) * width + x) * 3;
        rgb[p] = rgb[p + 1] = rgb[p + 2] = 0;
    }
    write_png_rgb8(path, rgb, img_h, width);
}

} // namespace holo::io
