#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "gdt/geometry.hpp"
#include "gdt/image.hpp"
#include "gdt/rng.hpp"

namespace testutil {

// per-process scratch directory, wiped on construction
inline std::string scratch_dir(const std::string& tag) {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / ("gdt_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline gdt::BoundingBox random_box(gdt::Rng& rng, double span = 100.0) {
    return {rng.uniform(0.0, span), rng.uniform(0.0, span), rng.uniform(1.0, span / 2),
            rng.uniform(1.0, span / 2)};
}

inline gdt::ImageBuffer random_image(int w, int h, gdt::Rng& rng, int channels = 1) {
    gdt::ImageBuffer img;
    img.width = w;
    img.height = h;
    img.channels = channels;
    img.data.resize(static_cast<std::size_t>(w) * h * channels);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

} // namespace testutil
