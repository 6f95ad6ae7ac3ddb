#include "holofocus/image.hpp"

#include <algorithm>
#include <cmath>

namespace holo {

const char* to_string(RoiAnchor a) {
    return a == RoiAnchor::center ? "center" : "bottom_left";
}

RoiAnchor roi_anchor_from_string(const std::string& s) {
    if (s == "center") return RoiAnchor::center;
    if (s == "bottom_left") return RoiAnchor::bottom_left;
    throw ConfigError("unknown ROI anchor '" + s + "' (expected center|bottom_left)");
}

double image_min(const Image& img) {
    return *std::min_element(img.pix.begin(), img.pix.end());
}

double image_max(const Image& img) {
    return *std::max_element(img.pix.begin(), img.pix.end());
}

double image_mean(const Image& img) {
    double s = 0.0;
    for (double v : img.pix) s += v;
    return s / static_cast<double>(img.size());
}

double image_variance(const Image& img) {
    double mu = image_mean(img);
    double s = 0.0;
    for (double v : img.pix) s += (v - mu) * (v - mu);
    return s / static_cast<double>(img.size());
}

Image crop_roi(const Image& img, RoiAnchor anchor, int size) {
    if (size > img.height || size > img.width)
        throw RoiTooLarge("ROI size " + std::to_string(size) + " exceeds image " +
                          std::to_string(img.height) + "x" + std::to_string(img.width));
    int r0 = 0, c0 = 0;
    if (anchor == RoiAnchor::center) {
        r0 = (img.height - size) / 2;
        c0 = (img.width - size) / 2;
    } else {
        r0 = img.height - size;
        c0 = 0;
    }
    Image out(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) out.at(r, c) = img.at(r0 + r, c0 + c);
    return out;
}

Image sobel_magnitude(const Image& img) {
    if (img.height < 3 || img.width < 3)
        throw ImageTooSmall("sobel_magnitude needs at least 3x3, got " +
                            std::to_string(img.height) + "x" + std::to_string(img.width));
    const int h = img.height, w = img.width;
    auto clamp_at = [&](int r, int c) {
        r = std::clamp(r, 0, h - 1);
        c = std::clamp(c, 0, w - 1);
        return img.at(r, c);
    };
    Image out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double tl = clamp_at(r - 1, c - 1), tc = clamp_at(r - 1, c), tr = clamp_at(r - 1, c + 1);
            double ml = clamp_at(r, c - 1), mr = clamp_at(r, c + 1);
            double bl = clamp_at(r + 1, c - 1), bc = clamp_at(r + 1, c), br = clamp_at(r + 1, c + 1);
            double gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
            double gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
            out.at(r, c) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return minmax_normalize(out);
}

Image negate(const Image& img) {
    for (double v : img.pix) {
        if (v < -1e-9 || v > 1.0 + 1e-9)
            throw OutOfRange("negate expects values in [0,1], got " + std::to_string(v));
    }
    Image out(img.height, img.width);
    for (size_t i = 0; i < img.size(); ++i) out.pix[i] = 1.0 - img.pix[i];
    return out;
}

Image minmax_normalize(const Image& img) {
    double lo = image_min(img), hi = image_max(img);
    Image out(img.height, img.width);
    if (hi > lo) {
        double inv = 1.0 / (hi - lo);
        for (size_t i = 0; i < img.size(); ++i) out.pix[i] = (img.pix[i] - lo) * inv;
    }
    return out;
}

Image area_downsample(const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0 || out_h > img.height || out_w > img.width)
        throw InvalidResize("area_downsample target " + std::to_string(out_h) + "x" +
                            std::to_string(out_w) + " invalid for " + std::to_string(img.height) +
                            "x" + std::to_string(img.width));
    if (out_h == img.height && out_w == img.width) return img;
    Image out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double y0 = r * sy, y1 = (r + 1) * sy;
        for (int c = 0; c < out_w; ++c) {
            double x0 = c * sx, x1 = (c + 1) * sx;
            double acc = 0.0;
            for (int ry = static_cast<int>(std::floor(y0)); ry < static_cast<int>(std::ceil(y1)); ++ry) {
                double wy = std::min<double>(y1, ry + 1) - std::max<double>(y0, ry);
                for (int rx = static_cast<int>(std::floor(x0)); rx < static_cast<int>(std::ceil(x1)); ++rx) {
                    double wx = std::min<double>(x1, rx + 1) - std::max<double>(x0, rx);
                    acc += wy * wx * img.at(std::min(ry, img.height - 1), std::min(rx, img.width - 1));
                }
            }
            out.at(r, c) = acc / (sy * sx);
        }
    }
    return out;
}

Image bilinear_upsample(const Image& img, int out_h, int out_w) {
    if (out_h == img.height && out_w == img.width) return img;
    Image out(out_h, out_w);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double ty = fy - y0;
        int y1 = std::clamp(y0 + 1, 0, img.height - 1);
        y0 = std::clamp(y0, 0, img.height - 1);
        for (int c = 0; c < out_w; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double tx = fx - x0;
            int x1 = std::clamp(x0 + 1, 0, img.width - 1);
            x0 = std::clamp(x0, 0, img.width - 1);
            double top = img.at(y0, x0) * (1 - tx) + img.at(y0, x1) * tx;
            double bot = img.at(y1, x0) * (1 - tx) + img.at(y1, x1) * tx;
            out.at(r, c) = top * (1 - ty) + bot * ty;
        }
    }
    return out;
}

} // namespace holo
