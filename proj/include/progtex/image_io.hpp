#pragma once

#include <png.h>
#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "progtex/error.hpp"

namespace progtex {

/// Raw PNG raster. Samples are row-major, interleaved, top row first.
/// Indexed images carry palette indices in `samples` (one channel).
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 3;   // 1 (gray or indexed) or 3 (RGB)
    int bit_depth = 8;  // 8 or 16
    bool indexed = false;
    std::vector<std::array<std::uint8_t, 3>> palette;
    std::vector<std::uint16_t> samples;

    std::size_t sample_count() const {
        return static_cast<std::size_t>(width) * height * channels;
    }
};

namespace detail {

[[noreturn]] inline void png_throw(png_structp, png_const_charp message) {
    throw Error(ErrorCode::ParseError, std::string("png: ") + message);
}

inline void png_warn(png_structp, png_const_charp) {}

struct PngReadCursor {
    std::string_view data;
    std::size_t offset = 0;
};

inline void png_read_bytes(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<PngReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->data.size()) {
        png_error(png, "unexpected end of data");
    }
    std::memcpy(out, cursor->data.data() + cursor->offset, length);
    cursor->offset += length;
}

inline void png_write_bytes(png_structp png, png_bytep in, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(in), length);
}

inline void png_flush_noop(png_structp) {}

} // namespace detail

inline std::string encode_png(const PngImage& image) {
    if (image.width <= 0 || image.height <= 0) {
        fail(ErrorCode::InvalidArgument, "png: empty image");
    }
    if (image.samples.size() != image.sample_count()) {
        fail(ErrorCode::ShapeMismatch, "png: sample count does not match dimensions");
    }
    if (image.indexed && (image.channels != 1 || image.bit_depth != 8 || image.palette.empty())) {
        fail(ErrorCode::InvalidArgument, "png: indexed images must be 8-bit single channel with a palette");
    }

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn);
    if (!png) fail(ErrorCode::IoError, "png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    std::string out;
    try {
        png_set_write_fn(png, &out, detail::png_write_bytes, detail::png_flush_noop);
        int color_type = PNG_COLOR_TYPE_RGB;
        if (image.indexed) {
            color_type = PNG_COLOR_TYPE_PALETTE;
        } else if (image.channels == 1) {
            color_type = PNG_COLOR_TYPE_GRAY;
        }
        png_set_IHDR(png, info, image.width, image.height, image.bit_depth, color_type, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        std::vector<png_color> palette;
        if (image.indexed) {
            for (const auto& entry : image.palette) palette.push_back(png_color{entry[0], entry[1], entry[2]});
            png_set_PLTE(png, info, palette.data(), static_cast<int>(palette.size()));
        }
        png_write_info(png, info);

        const int bytes_per_sample = image.bit_depth / 8;
        const std::size_t row_samples = static_cast<std::size_t>(image.width) * image.channels;
        std::vector<png_byte> row(row_samples * bytes_per_sample);
        for (int y = 0; y < image.height; ++y) {
            const std::uint16_t* src = image.samples.data() + y * row_samples;
            for (std::size_t i = 0; i < row_samples; ++i) {
                if (bytes_per_sample == 2) {
                    row[2 * i] = static_cast<png_byte>(src[i] >> 8);
                    row[2 * i + 1] = static_cast<png_byte>(src[i] & 0xff);
                } else {
                    row[i] = static_cast<png_byte>(src[i]);
                }
            }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

inline PngImage decode_png(std::string_view bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
        fail(ErrorCode::ParseError, "png: missing signature");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn);
    if (!png) fail(ErrorCode::IoError, "png: cannot allocate reader");
    png_infop info = png_create_info_struct(png);
    PngImage image;
    detail::PngReadCursor cursor{bytes, 0};
    try {
        png_set_read_fn(png, &cursor, detail::png_read_bytes);
        png_read_info(png, info);
        image.width = static_cast<int>(png_get_image_width(png, info));
        image.height = static_cast<int>(png_get_image_height(png, info));
        const int color_type = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);

        if (color_type == PNG_COLOR_TYPE_PALETTE) {
            png_colorp palette = nullptr;
            int count = 0;
            png_get_PLTE(png, info, &palette, &count);
            for (int i = 0; i < count; ++i) image.palette.push_back({palette[i].red, palette[i].green, palette[i].blue});
            image.indexed = true;
            if (depth < 8) png_set_packing(png);
        } else if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
        }
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);

        image.channels = png_get_channels(png, info);
        image.bit_depth = png_get_bit_depth(png, info);
        if (image.channels != 1 && image.channels != 3) {
            png_error(png, "unsupported channel layout");
        }
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        std::vector<png_byte> raster(rowbytes * image.height);
        std::vector<png_bytep> rows(image.height);
        for (int y = 0; y < image.height; ++y) rows[y] = raster.data() + y * rowbytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        image.samples.resize(image.sample_count());
        const std::size_t row_samples = static_cast<std::size_t>(image.width) * image.channels;
        for (int y = 0; y < image.height; ++y) {
            const png_byte* src = rows[y];
            for (std::size_t i = 0; i < row_samples; ++i) {
                image.samples[y * row_samples + i] = image.bit_depth == 16
                    ? static_cast<std::uint16_t>((src[2 * i] << 8) | src[2 * i + 1])
                    : src[i];
            }
        }
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

inline std::string base64_encode(std::string_view bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

inline std::string base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) fail(ErrorCode::ProtocolError, "base64 length is not a multiple of 4");
    if (text.empty()) return {};
    std::string out(3 * text.size() / 4, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) fail(ErrorCode::ProtocolError, "malformed base64 payload");
    // EVP_DecodeBlock counts padding as zero bytes.
    std::size_t padding = 0;
    if (text.back() == '=') ++padding;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++padding;
    out.resize(static_cast<std::size_t>(n) - padding);
    return out;
}

} // namespace progtex
