#include "uapatch/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "uapatch/errors.hpp"

namespace uapatch {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const Tensor& rgb) {
    if (rgb.c != 3 || rgb.h <= 0 || rgb.w <= 0)
        throw ShapeError("write_png: expected (3, h, w) tensor");
    if (!all_finite(rgb)) throw ValidationError("write_png: non-finite pixels");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("write_png: libpng error writing " + path);
    }

    png_init_io(png, fp.get());
    // Pinned settings keep output byte-stable across runs.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, rgb.w, rgb.h, 16, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_uint_16> row(static_cast<std::size_t>(rgb.w) * 3);
    std::vector<png_byte> rowbytes(row.size() * 2);
    for (int y = 0; y < rgb.h; ++y) {
        for (int x = 0; x < rgb.w; ++x) {
            for (int ci = 0; ci < 3; ++ci) {
                double v = rgb.at(ci, y, x);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[static_cast<std::size_t>(x) * 3 + ci] =
                    static_cast<png_uint_16>(std::lround(v * 65535.0));
            }
        }
        // PNG is big-endian for 16-bit samples.
        for (std::size_t i = 0; i < row.size(); ++i) {
            rowbytes[2 * i] = static_cast<png_byte>(row[i] >> 8);
            rowbytes[2 * i + 1] = static_cast<png_byte>(row[i] & 0xff);
        }
        png_write_row(png, rowbytes.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("read_png: cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError("read_png: not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("read_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("read_png: libpng error reading " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);

    // Normalize whatever we get to 16-bit RGB.
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth < 16) png_set_expand_16(png);
    png_read_update_info(png, info);

    Tensor out(3, static_cast<int>(h), static_cast<int>(w));
    std::vector<png_byte> rowbytes(static_cast<std::size_t>(w) * 3 * 2);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, rowbytes.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int ci = 0; ci < 3; ++ci) {
                std::size_t o = (static_cast<std::size_t>(x) * 3 + ci) * 2;
                unsigned v = (static_cast<unsigned>(rowbytes[o]) << 8) | rowbytes[o + 1];
                out.at(ci, static_cast<int>(y), static_cast<int>(x)) = v / 65535.0;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace uapatch
