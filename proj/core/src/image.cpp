/*
 * Copyright (c) 2026, the shadowformer-cpp authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "shadowformer/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>

namespace sf {

void warn_once(const std::string& tag, const std::string& message)
{
    static std::mutex mu;
    static std::set<std::string> seen;
    std::lock_guard<std::mutex> lock(mu);
    if (seen.insert(tag).second) {
        std::cerr << "warning: " << message << " (further warnings of this kind suppressed)\n";
    }
}

ImageTensor::ImageTensor(Tensor t) : data(std::move(t)) { validate(); }

ImageTensor ImageTensor::zeros(std::int64_t channels, std::int64_t h, std::int64_t w)
{
    ImageTensor img;
    img.data = Tensor({channels, h, w});
    img.validate();
    return img;
}

void ImageTensor::validate() const
{
    if (data.ndim() != 3) throw ShapeError("ImageTensor must be (channels, H, W)");
    const auto c = data.dim(0);
    if (c != 1 && c != 3) throw ShapeError(cat("ImageTensor channels must be 1 or 3, got ", c));
    if (data.dim(1) < 1 || data.dim(2) < 1) throw ShapeError("ImageTensor needs H >= 1, W >= 1");
}

ShadowMask::ShadowMask(Tensor t) : data(std::move(t)) { validate(); }

void ShadowMask::validate() const
{
    if (data.ndim() != 2) throw ShapeError("ShadowMask must be (H, W)");
    for (std::int64_t i = 0; i < data.numel(); ++i) {
        const double v = data[i];
        if (v != 0.0 && v != 1.0) throw ArgumentError("ShadowMask values must be exactly 0 or 1");
    }
}

double ShadowMask::coverage() const
{
    double s = 0.0;
    for (std::int64_t i = 0; i < data.numel(); ++i) s += data[i];
    return s / static_cast<double>(data.numel());
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageTensor load_png_file(std::FILE* fp, const std::filesystem::path& path)
{
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: failed to allocate read struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("libpng: failed to allocate info struct");
    }

    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(cat("failed to decode PNG: ", path.string()));
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // native little-endian u16

    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    const int out_depth = png_get_bit_depth(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(cat("unsupported PNG channel count ", channels, ": ", path.string()));
    }

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    pixels.resize(rowbytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageTensor img = ImageTensor::zeros(channels, h, w);
    if (out_depth == 16) {
        const double scale = 1.0 / 65535.0;
        for (png_uint_32 y = 0; y < h; ++y) {
            const auto* row = reinterpret_cast<const std::uint16_t*>(pixels.data() + y * rowbytes);
            for (png_uint_32 x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c)
                    img.data.at(c, y, x) = static_cast<double>(row[x * channels + c]) * scale;
        }
    } else {
        const double scale = 1.0 / 255.0;
        for (png_uint_32 y = 0; y < h; ++y) {
            const png_byte* row = pixels.data() + y * rowbytes;
            for (png_uint_32 x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c)
                    img.data.at(c, y, x) = static_cast<double>(row[x * channels + c]) * scale;
        }
    }
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

ImageTensor load_jpeg_file(std::FILE* fp, const std::filesystem::path& path)
{
    warn_once("jpeg-input", cat("JPEG input is lossy; binarized masks from JPEG may be imprecise: ",
                                path.string()));

    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError(cat("failed to decode JPEG: ", path.string()));
    }

    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    if (cinfo.jpeg_color_space == JCS_GRAYSCALE) {
        cinfo.out_color_space = JCS_GRAYSCALE;
    } else {
        cinfo.out_color_space = JCS_RGB;
    }
    jpeg_start_decompress(&cinfo);

    const int channels = cinfo.output_components;
    const auto w = static_cast<std::int64_t>(cinfo.output_width);
    const auto h = static_cast<std::int64_t>(cinfo.output_height);
    if (channels != 1 && channels != 3) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError(cat("unsupported JPEG channel count ", channels, ": ", path.string()));
    }

    std::vector<JSAMPLE> row(static_cast<std::size_t>(w) * channels);
    ImageTensor img = ImageTensor::zeros(channels, h, w);
    const double scale = 1.0 / 255.0;
    JSAMPROW rowp = row.data();
    while (cinfo.output_scanline < cinfo.output_height) {
        const auto y = static_cast<std::int64_t>(cinfo.output_scanline);
        jpeg_read_scanlines(&cinfo, &rowp, 1);
        for (std::int64_t x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.data.at(c, y, x) = static_cast<double>(row[x * channels + c]) * scale;
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

ImageTensor load_image(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw IoError(cat("no such file: ", path.string()));
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError(cat("cannot open: ", path.string()));

    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, sizeof(magic), fp.get());
    std::rewind(fp.get());

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return load_png_file(fp.get(), path);
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) return load_jpeg_file(fp.get(), path);
    throw FormatError(cat("unsupported image format (not PNG/JPEG): ", path.string()));
}

namespace {

void save_png_impl(const double* data, std::int64_t channels, std::int64_t h, std::int64_t w,
                   const std::filesystem::path& path)
{
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError(cat("cannot open for write: ", path.string()));

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng: failed to allocate write struct");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("libpng: failed to allocate info struct");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(cat("failed to write PNG: ", path.string()));
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<std::size_t>(w) * channels);
    const std::int64_t plane = h * w;
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < channels; ++c) {
                const double v = data[c * plane + y * w + x];
                const long q = std::lround(v * 255.0);
                row[static_cast<std::size_t>(x * channels + c)] =
                    static_cast<png_byte>(std::clamp(q, 0L, 255L));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void save_png(const ImageTensor& img, const std::filesystem::path& path)
{
    save_png_impl(img.data.data(), img.channels(), img.height(), img.width(), path);
}

void save_png(const ShadowMask& mask, const std::filesystem::path& path)
{
    save_png_impl(mask.data.data(), 1, mask.height(), mask.width(), path);
}

ShadowMask binarize_mask(const ImageTensor& img, double threshold)
{
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ArgumentError(cat("mask threshold must be in (0,1), got ", threshold));
    const auto c = img.channels();
    const auto h = img.height();
    const auto w = img.width();
    ShadowMask mask;
    mask.data = Tensor({h, w});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            double m = 0.0;
            for (std::int64_t ch = 0; ch < c; ++ch) m += img.data.at(ch, y, x);
            m /= static_cast<double>(c);
            mask.data.at(y, x) = m > threshold ? 1.0 : 0.0;
        }
    }
    return mask;
}

namespace {

inline double srgb_linearize(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t)
{
    constexpr double delta3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    constexpr double scale = 1.0 / (3.0 * (6.0 / 29.0) * (6.0 / 29.0));
    return t > delta3 ? std::cbrt(t) : t * scale + 4.0 / 29.0;
}

}  // namespace

Tensor srgb_to_lab(const ImageTensor& img)
{
    if (img.channels() != 3) throw ShapeError("srgb_to_lab expects a 3-channel image");
    const auto h = img.height();
    const auto w = img.width();
    // sRGB D65 reference white.
    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;

    Tensor lab({3, h, w});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double r = srgb_linearize(img.data.at(0, y, x));
            const double g = srgb_linearize(img.data.at(1, y, x));
            const double b = srgb_linearize(img.data.at(2, y, x));
            const double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
            const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
            const double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
            const double fx = lab_f(X / xn);
            const double fy = lab_f(Y / yn);
            const double fz = lab_f(Z / zn);
            lab.at(0, y, x) = 116.0 * fy - 16.0;
            lab.at(1, y, x) = 500.0 * (fx - fy);
            lab.at(2, y, x) = 200.0 * (fy - fz);
        }
    }
    return lab;
}

ImageTensor resize_bilinear(const ImageTensor& img, std::int64_t h, std::int64_t w)
{
    if (h < 1 || w < 1) throw ArgumentError(cat("resize target must be positive, got ", h, "x", w));
    const auto c = img.channels();
    const auto hs = img.height();
    const auto ws = img.width();
    if (h == hs && w == ws) return img;  // exact identity

    ImageTensor out = ImageTensor::zeros(c, h, w);
    const double sy = static_cast<double>(hs) / static_cast<double>(h);
    const double sx = static_cast<double>(ws) / static_cast<double>(w);
    for (std::int64_t y = 0; y < h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(hs - 1));
        const auto y0 = static_cast<std::int64_t>(std::floor(fy));
        const auto y1 = std::min(y0 + 1, hs - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(ws - 1));
            const auto x0 = static_cast<std::int64_t>(std::floor(fx));
            const auto x1 = std::min(x0 + 1, ws - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double v00 = img.data.at(ch, y0, x0);
                const double v01 = img.data.at(ch, y0, x1);
                const double v10 = img.data.at(ch, y1, x0);
                const double v11 = img.data.at(ch, y1, x1);
                out.data.at(ch, y, x) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                        wy * ((1.0 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

ShadowMask resize_nearest(const ShadowMask& mask, std::int64_t h, std::int64_t w)
{
    if (h < 1 || w < 1) throw ArgumentError(cat("resize target must be positive, got ", h, "x", w));
    const auto hs = mask.height();
    const auto ws = mask.width();
    if (h == hs && w == ws) return mask;

    ShadowMask out;
    out.data = Tensor({h, w});
    const double sy = static_cast<double>(hs) / static_cast<double>(h);
    const double sx = static_cast<double>(ws) / static_cast<double>(w);
    for (std::int64_t y = 0; y < h; ++y) {
        auto ys = static_cast<std::int64_t>(std::floor((static_cast<double>(y) + 0.5) * sy));
        ys = std::clamp<std::int64_t>(ys, 0, hs - 1);
        for (std::int64_t x = 0; x < w; ++x) {
            auto xs = static_cast<std::int64_t>(std::floor((static_cast<double>(x) + 0.5) * sx));
            xs = std::clamp<std::int64_t>(xs, 0, ws - 1);
            out.data.at(y, x) = mask.data.at(ys, xs);
        }
    }
    return out;
}

ImageTensor clamp_output(const ImageTensor& img)
{
    ImageTensor out = img;
    for (std::int64_t i = 0; i < out.data.numel(); ++i)
        out.data[i] = std::clamp(out.data[i], 0.0, 1.0);
    return out;
}

}  // namespace sf
