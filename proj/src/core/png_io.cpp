#include "convad/core/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace convad::png {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes;
};

Decoded decode_file(const std::filesystem::path& path, bool want_gray) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open PNG: " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    const bool is_gray = color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA;
    if (want_gray && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    if (!want_gray && is_gray) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    Decoded d;
    d.height = static_cast<int>(png_get_image_height(png, info));
    d.width = static_cast<int>(png_get_image_width(png, info));
    d.channels = static_cast<int>(png_get_channels(png, info));
    const auto rowbytes = png_get_rowbytes(png, info);
    d.bytes.resize(rowbytes * d.height);
    std::vector<png_bytep> rows(d.height);
    for (int y = 0; y < d.height; ++y) rows[y] = d.bytes.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

void write_rows(png_structp png, png_infop info, int height, int width, int channels,
                const std::vector<std::uint8_t>& bytes) {
    int color = PNG_COLOR_TYPE_GRAY;
    if (channels == 3) color = PNG_COLOR_TYPE_RGB;
    if (channels == 4) color = PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, width, height, 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
    png_write_end(png, nullptr);
}

void write_file(const std::filesystem::path& path, int height, int width, int channels,
                const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::invalid_argument("PNG buffer size mismatch");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write PNG: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG write failed: " + path.string());
    }
    png_init_io(png, fp.get());
    write_rows(png, info, height, width, channels, bytes);
    png_destroy_write_struct(&png, &info);
}

void append_to_string(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), len);
}

}  // namespace

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

Image read_rgb(const std::filesystem::path& path, std::string id) {
    const auto d = decode_file(path, false);
    Image img(id.empty() ? path.stem().string() : std::move(id), d.height, d.width);
    for (std::size_t i = 0; i < d.bytes.size(); ++i) img.pixels[i] = static_cast<float>(d.bytes[i]) / 255.f;
    return img;
}

void write_rgb(const std::filesystem::path& path, const Image& image) {
    std::vector<std::uint8_t> bytes(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
    write_file(path, image.height, image.width, 3, bytes);
}

Mask read_mask(const std::filesystem::path& path) {
    const auto d = decode_file(path, true);
    Mask m(d.height, d.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = d.bytes[i] != 0 ? 1 : 0;
    return m;
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    std::transform(mask.data.begin(), mask.data.end(), bytes.begin(), [](auto v) { return v ? 255 : 0; });
    write_file(path, mask.height, mask.width, 1, bytes);
}

void write_gray(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& bytes) {
    write_file(path, height, width, 1, bytes);
}

std::string encode(int height, int width, int channels, const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::invalid_argument("PNG buffer size mismatch");
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG encode failed");
    }
    png_set_write_fn(png, &out, append_to_string, nullptr);
    write_rows(png, info, height, width, channels, bytes);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::string encode_rgb(const Image& image) {
    std::vector<std::uint8_t> bytes(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
    return encode(image.height, image.width, 3, bytes);
}

}  // namespace convad::png
