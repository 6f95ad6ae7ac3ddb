#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holofocus/image.hpp"

namespace holo::io {

struct Rgb {
    std::uint8_t r, g, b;
};

// Piecewise-linear viridis approximation over t in [0,1].
Rgb colormap_viridis(double t);

// n x n count grid rendered as an upscaled color matrix.
void render_confusion_png(const std::vector<std::vector<int>>& confusion,
                          const std::string& path);

// Bar chart of counts on a white background.
void render_histogram_png(const std::vector<int>& counts, const std::string& path);

} // namespace holo::io
