#pragma once

#include <vector>

#include "holofocus/common.hpp"

namespace holo {

// Dense row-major 2-D array of doubles. Used for target amplitudes,
// hologram intensities, reconstructions and heatmaps.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), pix(static_cast<size_t>(h) * static_cast<size_t>(w), fill) {}

    double& at(int r, int c) { return pix[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return pix[static_cast<size_t>(r) * width + c]; }
    std::size_t size() const { return pix.size(); }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

enum class RoiAnchor { center, bottom_left };

const char* to_string(RoiAnchor a);
RoiAnchor roi_anchor_from_string(const std::string& s);

double image_min(const Image& img);
double image_max(const Image& img);
double image_mean(const Image& img);
// Population variance (divide by N).
double image_variance(const Image& img);

// size x size block; center uses floor((dim-size)/2) offsets, bottom_left
// takes the lowest rows and leftmost columns.
Image crop_roi(const Image& img, RoiAnchor anchor, int size);

// sqrt(Gx^2 + Gy^2) with the standard 3x3 kernels, replicate border padding,
// min-max rescaled to [0,1]. Constant input maps to all zeros.
Image sobel_magnitude(const Image& img);

// 1 - v per pixel; input must already be in [0,1].
Image negate(const Image& img);

// Min-max rescale to [0,1]; constant input maps to all zeros.
Image minmax_normalize(const Image& img);

// Exact box-filter (area average) resampling to out_h x out_w.
Image area_downsample(const Image& img, int out_h, int out_w);

Image bilinear_upsample(const Image& img, int out_h, int out_w);

} // namespace holo
