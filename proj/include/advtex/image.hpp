#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "advtex/error.hpp"

namespace advtex {

/// Dense interleaved image, row-major, `channels` values per pixel.
template <class T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T{}) : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

    [[nodiscard]] bool empty() const { return data.empty(); }
    [[nodiscard]] std::size_t pixel_count() const { return std::size_t(width) * height; }
    [[nodiscard]] std::size_t offset(int x, int y, int c = 0) const {
        return (std::size_t(y) * width + x) * channels + c;
    }
    T& at(int x, int y, int c = 0) { return data[offset(x, y, c)]; }
    const T& at(int x, int y, int c = 0) const { return data[offset(x, y, c)]; }

    bool operator==(const Image&) const = default;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// ITU-R BT.601 luma of an RGB image.
template <class T>
ImageD luma(const Image<T>& rgb) {
    ImageD out(rgb.width, rgb.height, 1);
    for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
        const T* px = &rgb.data[p * rgb.channels];
        out.data[p] = rgb.channels >= 3 ? 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2] : double(px[0]);
    }
    return out;
}

/// Bilinear lookup with clamp-to-edge; (x, y) in pixel-center coordinates,
/// so integer coordinates hit pixel values exactly.
template <class T>
void sample_bilinear(const Image<T>& img, double x, double y, T* out) {
    x = std::clamp(x, 0.0, double(img.width - 1));
    y = std::clamp(y, 0.0, double(img.height - 1));
    const int x0 = std::min(int(std::floor(x)), img.width - 1);
    const int y0 = std::min(int(std::floor(y)), img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    for (int c = 0; c < img.channels; ++c) {
        const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bot = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out[c] = T((1 - fy) * top + fy * bot);
    }
}

/// Circular translation: out(p) = in(p - shift).
template <class T>
Image<T> circular_shift(const Image<T>& img, int dx, int dy) {
    Image<T> out(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y) {
        const int sy = ((y - dy) % img.height + img.height) % img.height;
        for (int x = 0; x < img.width; ++x) {
            const int sx = ((x - dx) % img.width + img.width) % img.width;
            for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
        }
    }
    return out;
}

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

} // namespace detail

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA, palette) into an
/// RGB float image in [0,1].
inline ImageF read_png(const std::filesystem::path& path) {
    auto file = detail::open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("'" + path.string() + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialisation failed");
    }
    ImageF img;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * h);
    rows.resize(h);
    for (int y = 0; y < h; ++y) rows[y] = buffer.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img = ImageF(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w * 3; ++x) img.data[std::size_t(y) * w * 3 + x] = rows[y][x] / 255.0f;
    return img;
}

/// Writes an RGB (or single-channel, replicated) image as 8-bit RGB PNG.
template <class T>
void write_png(const std::filesystem::path& path, const Image<T>& img) {
    if (img.channels != 3 && img.channels != 1) throw ArgumentError("write_png expects 1 or 3 channels");
    auto file = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialisation failed");
    }
    std::vector<unsigned char> buffer(std::size_t(img.width) * img.height * 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c) {
            const double v = img.data[p * img.channels + (img.channels == 3 ? c : 0)];
            buffer[p * 3 + c] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + std::size_t(y) * img.width * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG '" + path.string() + "'");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Depth files: "TEXD", u32 width, u32 height, u32 reserved (0), then
// width*height little-endian float32 meters, row-major. 0 marks invalid.
inline constexpr char kDepthMagic[4] = {'T', 'E', 'X', 'D'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

} // namespace detail

inline void write_depth(const std::filesystem::path& path, const ImageF& depth) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write(kDepthMagic, 4);
    detail::put_u32(os, std::uint32_t(depth.width));
    detail::put_u32(os, std::uint32_t(depth.height));
    detail::put_u32(os, 0);
    for (float v : depth.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_u32(os, bits);
    }
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline ImageF read_depth(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    unsigned char header[16];
    if (!is.read(reinterpret_cast<char*>(header), 16) || std::memcmp(header, kDepthMagic, 4) != 0)
        throw IoError("'" + path.string() + "' is not a TEXD depth file");
    const std::uint32_t w = detail::get_u32(header + 4);
    const std::uint32_t h = detail::get_u32(header + 8);
    if (w == 0 || h == 0 || std::uint64_t(w) * h > (1ull << 28))
        throw IoError("implausible depth dimensions in '" + path.string() + "'");
    std::vector<unsigned char> raw(std::size_t(w) * h * 4);
    if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size())))
        throw IoError("truncated depth file '" + path.string() + "'");
    ImageF depth(int(w), int(h), 1);
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
        const std::uint32_t bits = detail::get_u32(&raw[i * 4]);
        std::memcpy(&depth.data[i], &bits, 4);
    }
    return depth;
}

} // namespace advtex
