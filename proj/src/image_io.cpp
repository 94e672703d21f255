// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/image_io.hpp"

#include "bevfield/container.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

namespace bevfield {

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

// Exceptions must not cross libpng's C frames: the error handler records the
// message and longjmps back to the setjmp in the calling function, which then
// throws. Only trivially destructible locals are created after setjmp.
struct ErrorSlot {
    char msg[256] = {};
};

[[noreturn]] void
on_error(png_structp png, png_const_charp msg) {
    auto *slot = static_cast<ErrorSlot *>(png_get_error_ptr(png));
    std::snprintf(slot->msg, sizeof slot->msg, "%s", msg);
    png_longjmp(png, 1);
}

void
on_warning(png_structp, png_const_charp) {}

void
write_to_vector(png_structp png, png_bytep data, png_size_t n) {
    auto *out = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + n);
}

void
flush_noop(png_structp) {}

void
read_from_span(png_structp png, png_bytep data, png_size_t n) {
    auto *cur = static_cast<ReadCursor *>(png_get_io_ptr(png));
    if (cur->pos + n > cur->bytes.size()) {
        png_error(png, "truncated data");
    }
    std::memcpy(data, cur->bytes.data() + cur->pos, n);
    cur->pos += n;
}

struct WriteGuard {
    png_structp png = nullptr;
    png_infop info  = nullptr;
    ~WriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct ReadGuard {
    png_structp png = nullptr;
    png_infop info  = nullptr;
    ~ReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

} // namespace

std::uint8_t
to_u8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

double
linear_to_srgb(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

std::vector<std::uint8_t>
encode_png(const Image &img, bool srgb) {
    if (img.channels() != 3 || img.height() < 1 || img.width() < 1) {
        fail(ErrorKind::invalid_argument, "encode_png needs a non-empty 3-channel image");
    }
    const int h = img.height(), w = img.width();
    std::vector<std::uint8_t> rows(static_cast<std::size_t>(h) * w * 3);
    const auto d = img.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = to_u8(srgb ? linear_to_srgb(d[i]) : d[i]);
    }

    std::vector<std::uint8_t> out;
    WriteGuard g;
    ErrorSlot err;
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!g.png) {
        fail(ErrorKind::internal, "png_create_write_struct failed");
    }
    g.info = png_create_info_struct(g.png);
    if (!g.info) {
        fail(ErrorKind::internal, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(g.png))) {
        fail(ErrorKind::internal, std::string("png: ") + err.msg);
    }
    png_set_write_fn(g.png, &out, write_to_vector, flush_noop);
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);
    for (int r = 0; r < h; ++r) {
        png_write_row(g.png, rows.data() + static_cast<std::size_t>(r) * w * 3);
    }
    png_write_end(g.png, nullptr);
    return out;
}

Image
decode_png(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        fail(ErrorKind::invalid_argument, "not a PNG file");
    }
    ReadGuard g;
    ErrorSlot err;
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
    if (!g.png) {
        fail(ErrorKind::internal, "png_create_read_struct failed");
    }
    g.info = png_create_info_struct(g.png);
    if (!g.info) {
        fail(ErrorKind::internal, "png_create_info_struct failed");
    }
    ReadCursor cur{bytes, 0};
    std::vector<std::uint8_t> pixels;
    png_uint_32 h = 0, w = 0;
    int type = 0, depth = 0;
    if (setjmp(png_jmpbuf(g.png))) {
        fail(ErrorKind::invalid_argument, std::string("png: ") + err.msg);
    }
    png_set_read_fn(g.png, &cur, read_from_span);
    png_read_info(g.png, g.info);
    type  = png_get_color_type(g.png, g.info);
    depth = png_get_bit_depth(g.png, g.info);
    if (depth != 8 || (type != PNG_COLOR_TYPE_RGB && type != PNG_COLOR_TYPE_RGB_ALPHA)) {
        png_error(g.png, "only 8-bit RGB / RGBA PNG is supported");
    }
    h = png_get_image_height(g.png, g.info);
    w = png_get_image_width(g.png, g.info);
    if (static_cast<std::uint64_t>(h) * w > (1ull << 28)) {
        png_error(g.png, "image too large");
    }
    const std::size_t stride = static_cast<std::size_t>(w) * (type == PNG_COLOR_TYPE_RGB ? 3 : 4);
    pixels.resize(stride * h);
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(g.png, pixels.data() + r * stride, nullptr);
    }
    png_read_end(g.png, nullptr);

    const int cs = static_cast<int>(stride / w);
    Image img(static_cast<int>(h), static_cast<int>(w), 3);
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            for (int k = 0; k < 3; ++k) {
                img.at(r, c, k) = pixels[r * stride + static_cast<std::size_t>(c) * cs + k] / 255.0;
            }
        }
    }
    return img;
}

void
save_png(const Image &img, const std::string &path, bool srgb) {
    write_file(path, encode_png(img, srgb));
}

Image
load_png(const std::string &path) {
    return decode_png(read_file(path));
}

std::vector<std::uint8_t>
encode_image(const Image &img) {
    std::vector<float> payload(img.size());
    const auto d = img.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        payload[i] = static_cast<float>(d[i]);
    }
    const nlohmann::json header = {{"h", img.height()}, {"w", img.width()}, {"c", img.channels()}};
    return encode_container("IMGF0001", header, payload);
}

Image
decode_image(std::span<const std::uint8_t> bytes) {
    const Container c = decode_container(bytes, "IMGF0001", [](const nlohmann::json &h) {
        const auto n = h.at("h").get<long long>() * h.at("w").get<long long>() * h.at("c").get<long long>();
        if (h.at("h").get<int>() < 1 || h.at("w").get<int>() < 1 || h.at("c").get<int>() < 1) {
            fail(ErrorKind::invalid_argument, "image container has non-positive dims");
        }
        return static_cast<std::size_t>(n);
    });
    std::vector<double> data(c.payload.begin(), c.payload.end());
    return Image(c.header.at("h").get<int>(), c.header.at("w").get<int>(), c.header.at("c").get<int>(),
                 std::move(data));
}

} // namespace bevfield
