#include "holofocus/io/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "holofocus/common.hpp"

namespace holo::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_png_gray16(const std::string& path, const std::vector<std::uint16_t>& data, int height,
                      int width) {
    if (static_cast<size_t>(height) * width != data.size())
        throw ShapeMismatch("png gray16 payload does not match dimensions");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failure: " + path);
    }
    png_init_io(png, fp.get());
    png_set_compression_level(png, 6); // fixed for byte determinism
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<std::uint8_t> row(static_cast<size_t>(width) * 2);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            std::uint16_t v = data[static_cast<size_t>(r) * width + c];
            row[static_cast<size_t>(c) * 2] = static_cast<std::uint8_t>(v >> 8); // PNG is big-endian
            row[static_cast<size_t>(c) * 2 + 1] = static_cast<std::uint8_t>(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint16_t> read_png_gray16(const std::string& path, int& height, int& width) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng read failure: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY)
        throw IoError("expected grayscale PNG: " + path);
    if (bit_depth == 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);

    height = static_cast<int>(h);
    width = static_cast<int>(w);
    std::vector<std::uint16_t> out(static_cast<size_t>(h) * w);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 c = 0; c < w; ++c) {
            if (bit_depth == 16) {
                out[static_cast<size_t>(r) * w + c] = static_cast<std::uint16_t>(
                    (row[static_cast<size_t>(c) * 2] << 8) | row[static_cast<size_t>(c) * 2 + 1]);
            } else {
                out[static_cast<size_t>(r) * w + c] =
                    static_cast<std::uint16_t>(row[static_cast<size_t>(c)] * 257);
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& data, int height,
                    int width) {
    if (static_cast<size_t>(height) * width * 3 != data.size())
        throw ShapeMismatch("png rgb8 payload does not match dimensions");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng write failure: " + path);
    }
    png_init_io(png, fp.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r)
        png_write_row(png, const_cast<png_bytep>(data.data() + static_cast<size_t>(r) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::pair<double, double> save_intensity_png(const std::string& path, const Image& img) {
    double lo = image_min(img), hi = image_max(img);
    if (!(hi > lo)) hi = lo + 1.0; // constant image still round-trips
    std::vector<std::uint16_t> data(img.size());
    const double scale = 65535.0 / (hi - lo);
    for (size_t i = 0; i < img.size(); ++i)
        data[i] = static_cast<std::uint16_t>(std::lround((img.pix[i] - lo) * scale));
    write_png_gray16(path, data, img.height, img.width);
    return {lo, hi};
}

Image load_intensity_png(const std::string& path, double lo, double hi) {
    int h = 0, w = 0;
    std::vector<std::uint16_t> data = read_png_gray16(path, h, w);
    Image img(h, w);
    const double scale = (hi - lo) / 65535.0;
    for (size_t i = 0; i < img.size(); ++i) img.pix[i] = lo + data[i] * scale;
    return img;
}

Image load_unit_png(const std::string& path) { return load_intensity_png(path, 0.0, 1.0); }

void save_unit_png(const std::string& path, const Image& img) {
    std::vector<std::uint16_t> data(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
        double v = std::clamp(img.pix[i], 0.0, 1.0);
        data[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    write_png_gray16(path, data, img.height, img.width);
}

} // namespace holo::io
