#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdt/geometry.hpp"

namespace gdt {

// Decoded raster image: row-major, channels interleaved, 8 bits per sample.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    std::uint8_t at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }

    bool operator==(const ImageBuffer&) const = default;
};

/// Loads a binary PGM (P5) or PPM (P6) file with maxval 255. Any other
/// variant, a maxval other than 255, or truncated pixel data is a FormatError
/// naming the offending token.
ImageBuffer load_image(const std::string& path);

/// Same decoder over an in-memory byte range; `origin` labels error messages.
ImageBuffer decode_pnm(const std::uint8_t* bytes, std::size_t size, const std::string& origin);

/// Writes P5 for 1-channel images, P6 for 3-channel.
void save_image(const ImageBuffer& img, const std::string& path);

/// Byte-mean grayscale: round((r+g+b)/3) per pixel. 1-channel input is copied.
ImageBuffer to_grayscale(const ImageBuffer& img);

/// Bilinear resample of the box region to out_w x out_h. Sample positions use
/// half-pixel centers; samples outside the image clamp to the nearest edge
/// pixel; quantization back to 8 bits rounds half up (so an exact .5 average
/// becomes the larger value, e.g. a 2x2 checkerboard of 0/255 collapses to
/// 128). A box entirely outside the image is a GeometryError.
ImageBuffer crop_resize(const ImageBuffer& img, const BoundingBox& box, int out_w, int out_h);

} // namespace gdt
