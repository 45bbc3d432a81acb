#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vmb {

/// Interleaved 8-bit RGB.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;
};

/// Planar double image in [0, 1], channel-major [3][H][W].
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<double> planes;

    double& at(int c, int y, int x) {
        return planes[static_cast<std::size_t>((c * height + y) * width + x)];
    }
    double at(int c, int y, int x) const {
        return planes[static_cast<std::size_t>((c * height + y) * width + x)];
    }
};

/// Sniffs PNG/JPEG by magic bytes; grayscale is promoted to 3 channels.
ImageU8 decode_image(const std::string& path);
ImageU8 read_png(const std::string& path);
ImageU8 read_jpeg(const std::string& path);
void write_png(const std::string& path, const ImageU8& image);

ImageF to_float(const ImageU8& u8);
ImageU8 to_u8(const ImageF& f);

ImageF resize_bilinear(const ImageF& src, int out_width, int out_height);
void flip_horizontal(ImageF& img);
/// Rotation about the image center; out-of-frame samples replicate the edge.
ImageF rotate_edge_replicate(const ImageF& src, double degrees);
void adjust_brightness(ImageF& img, double factor);
void adjust_contrast(ImageF& img, double factor);
void adjust_saturation(ImageF& img, double factor);

} // namespace vmb
