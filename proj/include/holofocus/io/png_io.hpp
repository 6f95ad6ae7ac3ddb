#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "holofocus/image.hpp"

namespace holo::io {

// 16-bit grayscale. Values are written as-is; callers do the physical
// scaling and keep the constants in the dataset manifest.
void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& data, int height,
                      int width);
std::vector<std::uint16_t> read_png_gray16(const std::string& path, int& height, int& width);

// 8-bit RGB, interleaved.
void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& data, int height,
                    int width);

// Intensity image -> 16-bit PNG with a linear [lo,hi] -> [0,65535] map.
// Returns the (lo, hi) pair actually used.
std::pair<double, double> save_intensity_png(const std::string& path, const Image& img);

// Inverse of save_intensity_png given the stored mapping constants.
Image load_intensity_png(const std::string& path, double lo, double hi);

// PNG already normalized to [0,1] (scenario images).
Image load_unit_png(const std::string& path);
void save_unit_png(const std::string& path, const Image& img);

} // namespace holo::io
