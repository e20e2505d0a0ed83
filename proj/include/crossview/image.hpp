#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "crossview/errors.hpp"
#include "crossview/tensor.hpp"

namespace crossview {

// Interleaved H x W x C raster with scalars in [0,1]; 1 (gray) or 3 (RGB) channels.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels)
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, 0.0f) {
        if (height <= 0 || width <= 0 || (channels != 1 && channels != 3)) {
            throw ConfigError("image: invalid dimensions " + std::to_string(height) + "x" +
                              std::to_string(width) + "x" + std::to_string(channels));
        }
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }

    float& at(int y, int x, int c) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    void clamp01() {
        for (auto& v : data_) v = std::min(1.0f, std::max(0.0f, v));
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.height_ == b.height_ && a.width_ == b.width_ && a.channels_ == b.channels_ &&
               a.data_ == b.data_;
    }

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

// 4-neighbor bilinear interpolation, coordinates clamped to the valid rectangle.
inline std::array<float, 3> bilinear_sample(const Image& img, double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
        throw NumericError("bilinear_sample: non-finite coordinates");
    }
    const double xc = std::min(static_cast<double>(img.width() - 1), std::max(0.0, x));
    const double yc = std::min(static_cast<double>(img.height() - 1), std::max(0.0, y));
    const int x0 = static_cast<int>(std::floor(xc));
    const int y0 = static_cast<int>(std::floor(yc));
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const float fx = static_cast<float>(xc - x0);
    const float fy = static_cast<float>(yc - y0);
    std::array<float, 3> out{0.0f, 0.0f, 0.0f};
    for (int c = 0; c < img.channels(); ++c) {
        const float top = img.at(y0, x0, c) * (1.0f - fx) + img.at(y0, x1, c) * fx;
        const float bot = img.at(y1, x0, c) * (1.0f - fx) + img.at(y1, x1, c) * fx;
        out[static_cast<std::size_t>(c)] = top * (1.0f - fy) + bot * fy;
    }
    return out;
}

// [C,H,W] tensor view of an image, optionally centered (v - 0.5) for model input.
template <typename T>
Tensor<T> image_to_tensor(const Image& img, bool centered = false) {
    Tensor<T> t({img.channels(), img.height(), img.width()});
    const T off = centered ? T(0.5) : T(0);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                t(c, y, x) = static_cast<T>(img.at(y, x, c)) - off;
    return t;
}

// ---------------------------------------------------------------------------
// PNG (8-bit gray or RGB)
// ---------------------------------------------------------------------------

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline std::uint8_t to_u8(float v) {
    const float c = std::min(1.0f, std::max(0.0f, v));
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

} // namespace detail

inline Image read_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: info struct allocation failed");
    }
    std::vector<std::uint8_t> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: unsupported channel count in " + path);
    }
    raw.resize(static_cast<std::size_t>(height) * width * channels);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = raw.data() + static_cast<std::size_t>(y) * width * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(height), static_cast<int>(width), channels);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data()[i] = raw[i] / 255.0f;
    return img;
}

inline void write_png(const std::string& path, const Image& img) {
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: info struct allocation failed");
    }
    std::vector<std::uint8_t> raw(img.size());
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: failed to encode " + path);
    }
    png_init_io(png, fp.get());
    const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
                 static_cast<png_uint_32>(img.height()), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t i = 0; i < img.size(); ++i) raw[i] = detail::to_u8(img.data()[i]);
    for (int y = 0; y < img.height(); ++y) {
        rows[static_cast<std::size_t>(y)] =
            raw.data() + static_cast<std::size_t>(y) * img.width() * img.channels();
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------
// PPM / PGM (binary, maxval 255)
// ---------------------------------------------------------------------------

inline void write_pnm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << (img.channels() == 1 ? "P5" : "P6") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    std::vector<char> raw(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        raw[i] = static_cast<char>(detail::to_u8(img.data()[i]));
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write to " + path);
}

inline Image read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") throw IoError("pnm: unsupported format in " + path);
    int width = 0, height = 0, maxval = 0;
    in >> width >> height >> maxval;
    if (!in || width <= 0 || height <= 0 || maxval != 255) {
        throw IoError("pnm: bad header in " + path);
    }
    in.get(); // single whitespace after header
    const int channels = magic == "P5" ? 1 : 3;
    Image img(height, width, channels);
    std::vector<char> raw(img.size());
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("pnm: truncated data in " + path);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.data()[i] = static_cast<std::uint8_t>(raw[i]) / 255.0f;
    }
    return img;
}

inline Image read_image(const std::string& path) {
    if (path.size() >= 4) {
        const std::string ext = path.substr(path.size() - 4);
        if (ext == ".ppm" || ext == ".pgm") return read_pnm(path);
    }
    return read_png(path);
}

} // namespace crossview
