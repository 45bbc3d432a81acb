#include "vmb/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <jpeglib.h>
#include <zlib.h>

#include "vmb/error.hpp"

namespace vmb {

namespace {

constexpr double kPi = 3.14159265358979323846;
const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(static_cast<std::uint8_t>(x >> 24));
    v.push_back(static_cast<std::uint8_t>(x >> 16));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
    v.push_back(static_cast<std::uint8_t>(x));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

ImageU8 read_png(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
        throw DataError("not a PNG file: " + path);
    }
    std::size_t pos = 8;
    std::uint32_t width = 0, height = 0;
    int bit_depth = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    bool saw_iend = false;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        const std::uint32_t len = be32(&bytes[pos]);
        const std::string type(reinterpret_cast<const char*>(&bytes[pos + 4]), 4);
        pos += 8;
        if (pos + len + 4 > bytes.size()) throw DataError("truncated PNG: " + path);
        const std::uint8_t* data = &bytes[pos];
        if (type == "IHDR") {
            if (len != 13) throw DataError("bad PNG header: " + path);
            width = be32(data);
            height = be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw DataError("interlaced PNG unsupported: " + path);
            if (bit_depth != 8 || (color_type != 0 && color_type != 2 && color_type != 6)) {
                throw DataError("unsupported PNG format (need 8-bit gray/RGB/RGBA): " + path);
            }
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            saw_iend = true;
        }
        pos += len + 4; // skip CRC
    }
    if (width == 0 || height == 0 || idat.empty()) throw DataError("empty PNG: " + path);

    const int ch = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(ch);
    const std::size_t raw_size = (stride + 1) * height;
    std::vector<std::uint8_t> raw(raw_size);
    uLongf out_len = raw_size;
    if (uncompress(raw.data(), &out_len, idat.data(), idat.size()) != Z_OK || out_len != raw_size) {
        throw DataError("PNG inflate failed: " + path);
    }

    // undo per-row filters
    std::vector<std::uint8_t> pix(stride * height);
    for (std::uint32_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = &raw[y * (stride + 1) + 1];
        std::uint8_t* dst = &pix[y * stride];
        const std::uint8_t* up = y > 0 ? &pix[(y - 1) * stride] : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<std::size_t>(ch) ? dst[x - ch] : 0;
            const int b = up ? up[x] : 0;
            const int c = (up && x >= static_cast<std::size_t>(ch)) ? up[x - ch] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw DataError("bad PNG filter type: " + path);
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    ImageU8 img;
    img.width = static_cast<int>(width);
    img.height = static_cast<int>(height);
    img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * height; ++i) {
        if (ch == 1) {
            img.rgb[i * 3] = img.rgb[i * 3 + 1] = img.rgb[i * 3 + 2] = pix[i];
        } else {
            img.rgb[i * 3] = pix[i * ch];
            img.rgb[i * 3 + 1] = pix[i * ch + 1];
            img.rgb[i * 3 + 2] = pix[i * ch + 2];
        }
    }
    return img;
}

void write_png(const std::string& path, const ImageU8& image) {
    const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(image.height));
    for (int y = 0; y < image.height; ++y) {
        raw[static_cast<std::size_t>(y) * (stride + 1)] = 0; // filter: none
        std::memcpy(&raw[static_cast<std::size_t>(y) * (stride + 1) + 1],
                    &image.rgb[static_cast<std::size_t>(y) * stride], stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw DataError("PNG deflate failed: " + path);
    }
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    auto chunk = [&out](const char* type, const std::vector<std::uint8_t>& data) {
        put_be32(out, static_cast<std::uint32_t>(data.size()));
        const std::size_t start = out.size();
        out.insert(out.end(), type, type + 4);
        out.insert(out.end(), data.begin(), data.end());
        const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + start,
                                static_cast<uInt>(out.size() - start));
        put_be32(out, static_cast<std::uint32_t>(crc));
    };
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(image.width));
    put_be32(ihdr, static_cast<std::uint32_t>(image.height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type: RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk("IHDR", ihdr);
    chunk("IDAT", compressed);
    chunk("IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write PNG: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing PNG: " + path);
}

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

} // namespace

ImageU8 read_jpeg(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open image file: " + path);

    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(f);
        throw DataError("JPEG decode failed for " + path + ": " + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB; // promotes grayscale
    jpeg_start_decompress(&cinfo);

    ImageU8 img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = &img.rgb[static_cast<std::size_t>(cinfo.output_scanline) *
                                static_cast<std::size_t>(img.width) * 3];
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return img;
}

ImageU8 decode_image(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return read_png(path);
    if (bytes.size() >= 2 && bytes[0] == 0xff && bytes[1] == 0xd8) return read_jpeg(path);
    throw DataError("unrecognized image format (need PNG or JPEG): " + path);
}

ImageF to_float(const ImageU8& u8) {
    ImageF f;
    f.width = u8.width;
    f.height = u8.height;
    f.planes.resize(static_cast<std::size_t>(u8.width) * u8.height * 3);
    const std::size_t plane = static_cast<std::size_t>(u8.width) * u8.height;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            f.planes[static_cast<std::size_t>(c) * plane + i] = u8.rgb[i * 3 + static_cast<std::size_t>(c)] / 255.0;
        }
    }
    return f;
}

ImageU8 to_u8(const ImageF& f) {
    ImageU8 u;
    u.width = f.width;
    u.height = f.height;
    u.rgb.resize(static_cast<std::size_t>(f.width) * f.height * 3);
    const std::size_t plane = static_cast<std::size_t>(f.width) * f.height;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(f.planes[static_cast<std::size_t>(c) * plane + i], 0.0, 1.0);
            u.rgb[i * 3 + static_cast<std::size_t>(c)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return u;
}

ImageF resize_bilinear(const ImageF& src, int out_width, int out_height) {
    ImageF dst;
    dst.width = out_width;
    dst.height = out_height;
    dst.planes.resize(static_cast<std::size_t>(out_width) * out_height * 3);
    const double sx = static_cast<double>(src.width) / out_width;
    const double sy = static_cast<double>(src.height) / out_height;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < out_height; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, src.height - 1);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double wy = std::clamp(fy - y0, 0.0, 1.0);
            for (int x = 0; x < out_width; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, src.width - 1);
                const int x1 = std::min(x0 + 1, src.width - 1);
                const double wx = std::clamp(fx - x0, 0.0, 1.0);
                const double top = src.at(c, y0, x0) * (1 - wx) + src.at(c, y0, x1) * wx;
                const double bot = src.at(c, y1, x0) * (1 - wx) + src.at(c, y1, x1) * wx;
                dst.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

void flip_horizontal(ImageF& img) {
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width / 2; ++x) {
                std::swap(img.at(c, y, x), img.at(c, y, img.width - 1 - x));
            }
        }
    }
}

ImageF rotate_edge_replicate(const ImageF& src, double degrees) {
    const double rad = degrees * kPi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (src.width - 1) / 2.0, cy = (src.height - 1) / 2.0;
    ImageF dst;
    dst.width = src.width;
    dst.height = src.height;
    dst.planes.resize(src.planes.size());
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            // inverse mapping: rotate destination coords back into the source
            const double dx = x - cx, dy = y - cy;
            const double sxf = cs * dx + sn * dy + cx;
            const double syf = -sn * dx + cs * dy + cy;
            const int x0 = static_cast<int>(std::floor(sxf));
            const int y0 = static_cast<int>(std::floor(syf));
            const double wx = sxf - x0, wy = syf - y0;
            auto cl_x = [&](int v) { return std::clamp(v, 0, src.width - 1); };
            auto cl_y = [&](int v) { return std::clamp(v, 0, src.height - 1); };
            for (int c = 0; c < 3; ++c) {
                const double top = src.at(c, cl_y(y0), cl_x(x0)) * (1 - wx) +
                                   src.at(c, cl_y(y0), cl_x(x0 + 1)) * wx;
                const double bot = src.at(c, cl_y(y0 + 1), cl_x(x0)) * (1 - wx) +
                                   src.at(c, cl_y(y0 + 1), cl_x(x0 + 1)) * wx;
                dst.at(c, y, x) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

void adjust_brightness(ImageF& img, double factor) {
    for (double& v : img.planes) v = std::clamp(v * factor, 0.0, 1.0);
}

namespace {
double luma(const ImageF& img, std::size_t i) {
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    return 0.299 * img.planes[i] + 0.587 * img.planes[plane + i] + 0.114 * img.planes[2 * plane + i];
}
} // namespace

void adjust_contrast(ImageF& img, double factor) {
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += luma(img, i);
    mean /= static_cast<double>(plane);
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            auto& v = img.planes[static_cast<std::size_t>(c) * plane + i];
            v = std::clamp(factor * v + (1 - factor) * mean, 0.0, 1.0);
        }
    }
}

void adjust_saturation(ImageF& img, double factor) {
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < plane; ++i) {
        const double g = luma(img, i);
        for (int c = 0; c < 3; ++c) {
            auto& v = img.planes[static_cast<std::size_t>(c) * plane + i];
            v = std::clamp(factor * v + (1 - factor) * g, 0.0, 1.0);
        }
    }
}

} // namespace vmb
