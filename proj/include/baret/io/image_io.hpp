// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "baret/errors.hpp"
#include "baret/latent.hpp"

namespace baret::io {

// Lossless binary PPM (P6), 8-bit per channel.
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (!out) throw IoError("short write to " + path.string());
}

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(path.string() + ": not a binary PPM (P6) file");
    int w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0) throw IoError(path.string() + ": bad PPM header");
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit PPM supported");
    in.get();  // single whitespace after header
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
    if (in.gcount() != std::streamsize(img.rgb.size()))
        throw IoError(path.string() + ": truncated PPM payload");
    return img;
}

// Grayscale PGM (P5) used for attention-map dumps.
inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<uint8_t>& gray) {
    if (size_t(width) * size_t(height) != gray.size())
        throw ShapeError("write_pgm: size mismatch");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data()), std::streamsize(gray.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace baret::io
