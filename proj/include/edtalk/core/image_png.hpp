#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "edtalk/core/errors.hpp"
#include "edtalk/core/tensor.hpp"

namespace edtalk {

// Minimal PNG codec (8-bit, non-interlaced) on top of zlib. Handles the
// files this project writes plus common RGB/RGBA/gray input.

namespace pngdetail {

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

inline uint32_t get_u32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace pngdetail

/// Write 8-bit RGB. `rgb` is H*W*3, row-major.
inline void write_png(const std::string& path, int h, int w, const std::vector<uint8_t>& rgb) {
    if (static_cast<size_t>(h) * w * 3 != rgb.size()) throw ShapeError("write_png: size mismatch");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (w * 3 + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), rgb.begin() + static_cast<size_t>(y) * w * 3,
                   rgb.begin() + static_cast<size_t>(y + 1) * w * 3);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(bound);
    if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("write_png: deflate failed");
    comp.resize(bound);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    pngdetail::put_u32(ihdr, static_cast<uint32_t>(w));
    pngdetail::put_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);   // not interlaced
    pngdetail::chunk(out, "IHDR", ihdr);
    pngdetail::chunk(out, "IDAT", comp);
    pngdetail::chunk(out, "IEND", {});

    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("write_png: cannot open " + path);
    size_t n = std::fwrite(out.data(), 1, out.size(), f);
    std::fclose(f);
    if (n != out.size()) throw IoError("write_png: short write to " + path);
}

/// Read an 8-bit non-interlaced PNG as RGB (gray and RGBA are converted).
inline std::vector<uint8_t> read_png(const std::string& path, int& h, int& w) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("read_png: cannot open " + path);
    std::vector<uint8_t> buf;
    uint8_t tmp[65536];
    size_t n;
    while ((n = std::fread(tmp, 1, sizeof(tmp), f)) > 0) buf.insert(buf.end(), tmp, tmp + n);
    std::fclose(f);
    if (buf.size() < 8 || std::memcmp(buf.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw IoError("read_png: not a PNG: " + path);

    size_t pos = 8;
    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    while (pos + 8 <= buf.size()) {
        uint32_t len = pngdetail::get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw IoError("read_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = static_cast<int>(pngdetail::get_u32(data));
            height = static_cast<int>(pngdetail::get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (bit_depth != 8 || data[12] != 0)
                throw IoError("read_png: unsupported format (need 8-bit non-interlaced)");
            if (color_type != 0 && color_type != 2 && color_type != 6)
                throw IoError("read_png: unsupported color type");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw IoError("read_png: missing IHDR");

    int ch = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    size_t stride = static_cast<size_t>(width) * ch;
    std::vector<uint8_t> raw(static_cast<size_t>(height) * (stride + 1));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        rawlen != raw.size())
        throw IoError("read_png: inflate failed");

    std::vector<uint8_t> img(static_cast<size_t>(height) * stride);
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1) + 1;
        uint8_t* dst = img.data() + static_cast<size_t>(y) * stride;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= static_cast<size_t>(ch) ? dst[x - ch] : 0;
            int b = prev[x];
            int c = x >= static_cast<size_t>(ch) ? prev[x - ch] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += pngdetail::paeth(a, b, c); break;
                default: throw IoError("read_png: bad filter byte");
            }
            dst[x] = static_cast<uint8_t>(v);
        }
        std::memcpy(prev.data(), dst, stride);
    }

    h = height;
    w = width;
    std::vector<uint8_t> rgb(static_cast<size_t>(height) * width * 3);
    for (int64_t i = 0; i < static_cast<int64_t>(height) * width; ++i) {
        if (ch == 1) {
            rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = img[i];
        } else {
            rgb[i * 3] = img[i * ch];
            rgb[i * 3 + 1] = img[i * ch + 1];
            rgb[i * 3 + 2] = img[i * ch + 2];
        }
    }
    return rgb;
}

/// CHW float image in [0,1] -> PNG.
template <typename T>
void write_png_chw(const std::string& path, const Tensor<T>& img) {
    if (img.ndim() != 3 || img.dim(0) != 3) throw ShapeError("write_png_chw: need [3,H,W]");
    int h = img.dim(1), w = img.dim(2);
    std::vector<uint8_t> rgb(static_cast<size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                T v = img.at(c, y, x);
                v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
                rgb[(static_cast<size_t>(y) * w + x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(static_cast<double>(v) * 255.0));
            }
    write_png(path, h, w, rgb);
}

template <typename T>
Tensor<T> read_png_chw(const std::string& path) {
    int h = 0, w = 0;
    std::vector<uint8_t> rgb = read_png(path, h, w);
    Tensor<T> img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<T>(rgb[(static_cast<size_t>(y) * w + x) * 3 + c]) /
                                  T(255);
    return img;
}

}  // namespace edtalk
