#include "gdt/image.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "gdt/errors.hpp"

namespace gdt {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

// Whitespace-delimited header tokens; '#' starts a comment running to
// end of line, as in the classic PNM tools.
struct TokenReader {
    const std::uint8_t* bytes;
    std::size_t size;
    std::size_t pos = 0;
    const std::string& origin;

    void skip_space() {
        while (pos < size) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < size && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    std::string next() {
        skip_space();
        std::size_t start = pos;
        while (pos < size && !std::isspace(bytes[pos])) ++pos;
        if (start == pos) throw FormatError(origin + ": unexpected end of header");
        return std::string(reinterpret_cast<const char*>(bytes) + start, pos - start);
    }

    int next_int(const char* what) {
        const std::string tok = next();
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw FormatError(origin + ": bad " + std::string(what) + " token '" + tok + "'");
        }
    }
};

} // namespace

ImageBuffer decode_pnm(const std::uint8_t* bytes, std::size_t size, const std::string& origin) {
    TokenReader r{bytes, size, 0, origin};
    const std::string magic = r.next();
    int channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError(origin + ": unsupported PNM type '" + magic + "' (expected binary P5 or P6)");
    }
    const int width = r.next_int("width");
    const int height = r.next_int("height");
    if (width < 1 || height < 1) {
        throw FormatError(origin + ": non-positive image dimensions");
    }
    const std::string maxval_tok = r.next();
    if (maxval_tok != "255") {
        throw FormatError(origin + ": unsupported maxval token '" + maxval_tok + "' (expected 255)");
    }
    // exactly one whitespace byte separates the header from pixel data
    if (r.pos >= size || !std::isspace(bytes[r.pos])) {
        throw FormatError(origin + ": missing whitespace after maxval");
    }
    ++r.pos;

    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    const std::size_t need = static_cast<std::size_t>(width) * height * channels;
    if (size - r.pos < need) {
        throw FormatError(origin + ": truncated pixel data (need " + std::to_string(need) +
                          " bytes, have " + std::to_string(size - r.pos) + ")");
    }
    img.data.assign(bytes + r.pos, bytes + r.pos + need);
    return img;
}

ImageBuffer load_image(const std::string& path) {
    const auto bytes = read_file(path);
    return decode_pnm(bytes.data(), bytes.size(), path);
}

void save_image(const ImageBuffer& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw FormatError("save_image: only 1- or 3-channel images can be written");
    }
    if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
        throw DimensionError("save_image: data length does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()),
              static_cast<std::streamsize>(img.data.size()));
    if (!out) throw IoError("write failed: " + path);
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw DimensionError("to_grayscale: expected 1 or 3 channels");
    ImageBuffer out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 1;
    out.data.resize(static_cast<std::size_t>(img.width) * img.height);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const int sum = img.data[3 * i] + img.data[3 * i + 1] + img.data[3 * i + 2];
        out.data[i] = static_cast<std::uint8_t>(std::lround(sum / 3.0));
    }
    return out;
}

ImageBuffer crop_resize(const ImageBuffer& img, const BoundingBox& box, int out_w, int out_h) {
    if (!box.valid()) throw GeometryError("crop_resize: box has non-positive size");
    if (out_w < 1 || out_h < 1) throw GeometryError("crop_resize: output dims must be >= 1");
    if (box.right() <= 0.0 || box.bottom() <= 0.0 ||
        box.x >= static_cast<double>(img.width) || box.y >= static_cast<double>(img.height)) {
        throw GeometryError("crop_resize: box entirely outside the image");
    }

    ImageBuffer out;
    out.width = out_w;
    out.height = out_h;
    out.channels = img.channels;
    out.data.resize(static_cast<std::size_t>(out_w) * out_h * img.channels);

    const int W = img.width, H = img.height, C = img.channels;
    const double sx_scale = box.w / out_w;
    const double sy_scale = box.h / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = box.y + (oy + 0.5) * sy_scale - 0.5;
        const double fy0 = std::floor(sy);
        const double fy = sy - fy0;
        const int y0 = std::clamp(static_cast<int>(fy0), 0, H - 1);
        const int y1 = std::clamp(static_cast<int>(fy0) + 1, 0, H - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            const double sx = box.x + (ox + 0.5) * sx_scale - 0.5;
            const double fx0 = std::floor(sx);
            const double fx = sx - fx0;
            const int x0 = std::clamp(static_cast<int>(fx0), 0, W - 1);
            const int x1 = std::clamp(static_cast<int>(fx0) + 1, 0, W - 1);
            for (int c = 0; c < C; ++c) {
                const double v00 = img.at(x0, y0, c);
                const double v01 = img.at(x1, y0, c);
                const double v10 = img.at(x0, y1, c);
                const double v11 = img.at(x1, y1, c);
                const double v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
                                 fy * ((1.0 - fx) * v10 + fx * v11);
                const double q = std::floor(v + 0.5); // round half up
                out.at(ox, oy, c) = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
            }
        }
    }
    return out;
}

} // namespace gdt
